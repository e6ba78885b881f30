#include "irm/sensitivity.hpp"

#include "irm/error.hpp"
#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace irm {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Control bytes become spaces so offsets into the decoded text stay valid for
// the original input.
std::string lossy_decode(std::string_view content) {
    std::string out(content);
    for (auto& c : out) {
        auto u = static_cast<unsigned char>(c);
        if (u < 0x20 && c != '\n' && c != '\t') c = ' ';
    }
    return out;
}

SensitivityLabel make_label(DataCategory cat, double confidence, EvidenceSpan span) {
    SensitivityLabel l;
    l.category = cat;
    l.regulation_tags.insert(regulation_for(cat));
    l.confidence = std::min(1.0, confidence);
    l.evidence.push_back(std::move(span));
    return l;
}

// Keeps the highest-confidence label per category.
void upsert(std::map<DataCategory, SensitivityLabel>& acc, SensitivityLabel label) {
    auto it = acc.find(label.category);
    if (it == acc.end()) {
        acc.emplace(label.category, std::move(label));
    } else if (label.confidence > it->second.confidence) {
        it->second = std::move(label);
    }
}

LabelSet to_set(std::map<DataCategory, SensitivityLabel>&& acc) {
    LabelSet out;
    for (auto& [cat, l] : acc) out.push_back(std::move(l));
    return out;
}

Validator parse_validator(std::string_view s) {
    if (s == "luhn") return Validator::Luhn;
    if (s == "ssn") return Validator::Ssn;
    return Validator::None;
}

}  // namespace

std::string_view to_string(DataCategory c) {
    switch (c) {
        case DataCategory::PII: return "PII";
        case DataCategory::PHI: return "PHI";
        case DataCategory::PFI: return "PFI";
    }
    return "PII";
}

std::string_view to_string(Regulation r) {
    switch (r) {
        case Regulation::GDPR: return "GDPR";
        case Regulation::HIPAA: return "HIPAA";
        case Regulation::PCI_DSS: return "PCI_DSS";
    }
    return "GDPR";
}

std::optional<DataCategory> parse_data_category(std::string_view s) {
    if (s == "PII") return DataCategory::PII;
    if (s == "PHI") return DataCategory::PHI;
    if (s == "PFI") return DataCategory::PFI;
    return std::nullopt;
}

Regulation regulation_for(DataCategory c) {
    switch (c) {
        case DataCategory::PII: return Regulation::GDPR;
        case DataCategory::PHI: return Regulation::HIPAA;
        case DataCategory::PFI: return Regulation::PCI_DSS;
    }
    return Regulation::GDPR;
}

bool luhn_valid(std::string_view text) {
    std::vector<int> digits;
    for (char c : text) {
        if (c >= '0' && c <= '9') digits.push_back(c - '0');
    }
    if (digits.size() < 12) return false;
    int sum = 0;
    bool dbl = false;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        int d = *it;
        if (dbl) {
            d *= 2;
            if (d > 9) d -= 9;
        }
        sum += d;
        dbl = !dbl;
    }
    return sum % 10 == 0;
}

bool ssn_valid(std::string_view text) {
    if (text.size() != 11 || text[3] != '-' || text[6] != '-') return false;
    auto all_digits = [&](std::size_t pos, std::size_t len) {
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (text[i] < '0' || text[i] > '9') return false;
        }
        return true;
    };
    auto all_zero = [&](std::size_t pos, std::size_t len) {
        return text.substr(pos, len).find_first_not_of('0') == std::string_view::npos;
    };
    if (!all_digits(0, 3) || !all_digits(4, 2) || !all_digits(7, 4)) return false;
    return !all_zero(0, 3) && !all_zero(4, 2) && !all_zero(7, 4);
}

SensitivityConfig SensitivityConfig::defaults() {
    SensitivityConfig cfg;
    cfg.patterns = {
        {"ssn", R"(\b\d{3}-\d{2}-\d{4}\b)", DataCategory::PII, {"ssn", "social security"}, Validator::Ssn},
        {"credit_card", R"(\b\d{4}[ -]?\d{4}[ -]?\d{4}[ -]?\d{1,7}\b)", DataCategory::PFI,
         {"card number", "credit card", "visa", "mastercard", "amex"}, Validator::Luhn},
        {"email", R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})", DataCategory::PII,
         {"email", "contact", "e-mail"}, Validator::None},
        {"medical_record", R"(\bMRN[:# ]?\d{6,10}\b)", DataCategory::PHI, {"patient", "diagnosis", "medical"},
         Validator::None},
        {"icd10", R"(\b[A-TV-Z]\d{2}\.\d{1,4}\b)", DataCategory::PHI, {"diagnosis", "icd", "patient"},
         Validator::None},
        {"iban", R"(\b[A-Z]{2}\d{2}[A-Z0-9]{11,30}\b)", DataCategory::PFI, {"iban", "account", "bank"},
         Validator::None},
    };
    cfg.metadata_keywords = {
        {"passport", DataCategory::PII},  {"salary", DataCategory::PII},   {"salaries", DataCategory::PII},
        {"ssn", DataCategory::PII},       {"personnel", DataCategory::PII}, {"resume", DataCategory::PII},
        {"patient", DataCategory::PHI},   {"medical", DataCategory::PHI},   {"diagnos", DataCategory::PHI},
        {"clinical", DataCategory::PHI},  {"health", DataCategory::PHI},    {"payroll", DataCategory::PFI},
        {"invoice", DataCategory::PFI},   {"credit", DataCategory::PFI},    {"bank", DataCategory::PFI},
    };
    return cfg;
}

SensitivityConfig SensitivityConfig::from_json_text(const std::string& text) {
    SensitivityConfig cfg = defaults();
    try {
        auto doc = nlohmann::json::parse(text);
        cfg.context_window = doc.value("context_window", cfg.context_window);
        cfg.base_confidence = doc.value("base_confidence", cfg.base_confidence);
        cfg.context_bonus = doc.value("context_bonus", cfg.context_bonus);
        cfg.metadata_confidence = doc.value("metadata_confidence", cfg.metadata_confidence);
        if (doc.contains("patterns")) {
            cfg.patterns.clear();
            for (const auto& p : doc.at("patterns")) {
                PatternRule r;
                r.name = p.at("name").get<std::string>();
                r.regex = p.at("regex").get<std::string>();
                auto cat = parse_data_category(p.at("category").get<std::string>());
                if (!cat) throw Error(ErrorCode::ConfigError, "pattern " + r.name + ": bad category");
                r.category = *cat;
                r.context_keywords = p.value("context_keywords", std::vector<std::string>{});
                r.validator = parse_validator(p.value("validator", std::string{}));
                cfg.patterns.push_back(std::move(r));
            }
        }
        if (doc.contains("metadata_keywords")) {
            cfg.metadata_keywords.clear();
            for (const auto& k : doc.at("metadata_keywords")) {
                auto cat = parse_data_category(k.at("category").get<std::string>());
                if (!cat) throw Error(ErrorCode::ConfigError, "metadata keyword: bad category");
                cfg.metadata_keywords.push_back({k.at("keyword").get<std::string>(), *cat});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("sensitivity config: ") + e.what());
    }
    return cfg;
}

SensitivityConfig SensitivityConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

SensitivityClassifier::SensitivityClassifier(SensitivityConfig cfg) : cfg_(std::move(cfg)) {
    compiled_.reserve(cfg_.patterns.size());
    for (std::size_t i = 0; i < cfg_.patterns.size(); ++i) {
        const auto& rule = cfg_.patterns[i];
        try {
            compiled_.push_back({i, std::regex(rule.regex, std::regex::ECMAScript | std::regex::optimize)});
        } catch (const std::regex_error& e) {
            throw Error(ErrorCode::ConfigError, "pattern " + rule.name + ": " + e.what());
        }
    }
}

LabelSet SensitivityClassifier::classify_text(std::string_view content) const {
    if (content.empty()) return {};
    const std::string text = lossy_decode(content);
    const std::string lowered = lower(text);
    std::map<DataCategory, SensitivityLabel> acc;

    for (const auto& c : compiled_) {
        const PatternRule& rule = cfg_.patterns[c.rule];
        for (auto it = std::sregex_iterator(text.begin(), text.end(), c.re); it != std::sregex_iterator(); ++it) {
            const auto begin = static_cast<std::size_t>(it->position());
            const auto end = begin + static_cast<std::size_t>(it->length());
            const std::string_view hit(text.data() + begin, end - begin);
            if (rule.validator == Validator::Luhn && !luhn_valid(hit)) continue;
            if (rule.validator == Validator::Ssn && !ssn_valid(hit)) continue;

            const std::size_t lo = begin > cfg_.context_window ? begin - cfg_.context_window : 0;
            const std::size_t hi = std::min(text.size(), end + cfg_.context_window);
            const std::string_view window(lowered.data() + lo, hi - lo);
            const bool context = std::any_of(rule.context_keywords.begin(), rule.context_keywords.end(),
                                             [&](const std::string& kw) {
                                                 return window.find(lower(kw)) != std::string_view::npos;
                                             });
            double confidence = cfg_.base_confidence + (context ? cfg_.context_bonus : 0.0);
            upsert(acc, make_label(rule.category, confidence,
                                   {rule.name, EvidenceField::Content, begin, end}));
        }
    }
    return to_set(std::move(acc));
}

LabelSet SensitivityClassifier::classify_metadata(std::string_view name, std::string_view path) const {
    std::map<DataCategory, SensitivityLabel> acc;
    const std::string lname = lower(name);
    const std::string lpath = lower(path);
    for (const auto& kw : cfg_.metadata_keywords) {
        const std::string key = lower(kw.keyword);
        if (auto pos = lname.find(key); pos != std::string::npos) {
            upsert(acc, make_label(kw.category, cfg_.metadata_confidence,
                                   {"meta:" + kw.keyword, EvidenceField::Name, pos, pos + key.size()}));
        } else if (auto ppos = lpath.find(key); ppos != std::string::npos) {
            upsert(acc, make_label(kw.category, cfg_.metadata_confidence,
                                   {"meta:" + kw.keyword, EvidenceField::Path, ppos, ppos + key.size()}));
        }
    }
    return to_set(std::move(acc));
}

FileMeta SensitivityClassifier::classify_file(FileMeta meta, const std::optional<std::string>& content,
                                              Timestamp at) const {
    LabelSet labels = classify_metadata(meta.name, meta.path);
    if (content) labels = merge_labels(labels, classify_text(*content));
    meta.labels = merge_labels(meta.labels, labels);
    meta.classified_at = at;
    return meta;
}

LabelSet merge_labels(const LabelSet& a, const LabelSet& b) {
    std::map<DataCategory, SensitivityLabel> acc;
    for (const auto& l : a) upsert(acc, l);
    for (const auto& l : b) upsert(acc, l);
    return to_set(std::move(acc));
}

}  // namespace irm
