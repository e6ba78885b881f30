#pragma once

#include "irm/time_util.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace irm {

enum class DataCategory { PII, PHI, PFI };
enum class Regulation { GDPR, HIPAA, PCI_DSS };

std::string_view to_string(DataCategory c);
std::string_view to_string(Regulation r);
std::optional<DataCategory> parse_data_category(std::string_view s);
Regulation regulation_for(DataCategory c);

enum class EvidenceField { Content, Name, Path };

struct EvidenceSpan {
    std::string pattern_name;
    EvidenceField field = EvidenceField::Content;
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const EvidenceSpan&) const = default;
};

struct SensitivityLabel {
    DataCategory category = DataCategory::PII;
    std::set<Regulation> regulation_tags;
    double confidence = 0.0;
    std::vector<EvidenceSpan> evidence;

    bool operator==(const SensitivityLabel&) const = default;
};

// Labels are kept one per category, ordered by category.
using LabelSet = std::vector<SensitivityLabel>;

struct FileMeta {
    std::string file_id;
    std::string name;
    std::string path;
    std::uint64_t size_bytes = 0;
    LabelSet labels;
    Timestamp classified_at{};
};

enum class Validator { None, Luhn, Ssn };

struct PatternRule {
    std::string name;
    std::string regex;
    DataCategory category = DataCategory::PII;
    std::vector<std::string> context_keywords;
    Validator validator = Validator::None;
};

struct MetadataKeyword {
    std::string keyword;
    DataCategory category = DataCategory::PII;
};

struct SensitivityConfig {
    std::vector<PatternRule> patterns;
    std::vector<MetadataKeyword> metadata_keywords;
    std::size_t context_window = 50;
    double base_confidence = 0.6;
    double context_bonus = 0.3;
    double metadata_confidence = 0.5;

    static SensitivityConfig defaults();
    static SensitivityConfig from_json_text(const std::string& text);
    static SensitivityConfig load(const std::filesystem::path& path);
};

// Luhn checksum over the digits of `text` (non-digits ignored). Needs 12+ digits.
bool luhn_valid(std::string_view text);
// 3-2-4 grouping with no all-zero group.
bool ssn_valid(std::string_view text);

class SensitivityClassifier {
public:
    explicit SensitivityClassifier(SensitivityConfig cfg = SensitivityConfig::defaults());

    LabelSet classify_text(std::string_view content) const;
    LabelSet classify_metadata(std::string_view name, std::string_view path) const;
    FileMeta classify_file(FileMeta meta, const std::optional<std::string>& content, Timestamp at) const;

    const SensitivityConfig& config() const { return cfg_; }

private:
    struct Compiled {
        std::size_t rule;
        std::regex re;
    };

    SensitivityConfig cfg_;
    std::vector<Compiled> compiled_;
};

// Per-category max-confidence union of two label sets.
LabelSet merge_labels(const LabelSet& a, const LabelSet& b);

}  // namespace irm
