#pragma once

#include "irm/airs.hpp"
#include "irm/event.hpp"
#include "irm/policy.hpp"
#include "irm/prism.hpp"
#include "json.hpp"

namespace irm {

using Json = nlohmann::ordered_json;

Json to_json(const ActivityEvent& e);
// Accepts the shape produced by to_json; timestamps may be ISO-8601 or epoch
// seconds. Throws MalformedRow / BadTimestamp / UnknownActivity.
ActivityEvent event_from_json(const nlohmann::json& j);

Json to_json(const FactorBreakdown& b);
Json to_json(const RiskScore& s);
RiskScore risk_score_from_json(const nlohmann::json& j);

Json to_json(const FeatureVector& v);
FeatureVector feature_vector_from_json(const nlohmann::json& j);

Json to_json(const FeedbackRecord& r);
FeedbackRecord feedback_from_json(const nlohmann::json& j);

Json to_json(const ActionRecord& a);
Json to_json(const PolicyViolation& v);
PolicyViolation violation_from_json(const nlohmann::json& j);

Json to_json(const RiskProfile& p);
RiskProfile profile_from_json(const nlohmann::json& j);

}  // namespace irm
