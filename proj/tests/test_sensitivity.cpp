#include "doctest.h"
#include "support.hpp"

#include "irm/sensitivity.hpp"

#include <random>

using namespace irm;

namespace {

// Digit-sum form of the Luhn check, written out independently.
bool luhn_oracle(const std::string& digits) {
    int sum = 0;
    const int n = static_cast<int>(digits.size());
    for (int i = 0; i < n; ++i) {
        int d = digits[n - 1 - i] - '0';
        if (i % 2 == 1) {
            d *= 2;
            d = d / 10 + d % 10;
        }
        sum += d;
    }
    return sum % 10 == 0;
}

const SensitivityLabel* find(const LabelSet& s, DataCategory c) {
    for (const auto& l : s) {
        if (l.category == c) return &l;
    }
    return nullptr;
}

}  // namespace

TEST_CASE("ssn with keyword") {
    SensitivityClassifier c;
    auto labels = c.classify_text("SSN: 123-45-6789");
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].category == DataCategory::PII);
    CHECK(labels[0].confidence == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(labels[0].regulation_tags == std::set<Regulation>{Regulation::GDPR});

    auto bare = c.classify_text("ref 123-45-6789");
    REQUIRE(bare.size() == 1);
    CHECK(bare[0].confidence == doctest::Approx(0.6).epsilon(1e-12));

    CHECK(c.classify_text("SSN: 000-45-6789").empty());
}

TEST_CASE("card numbers need a valid checksum") {
    SensitivityClassifier c;
    auto labels = c.classify_text("4111 1111 1111 1111");
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].category == DataCategory::PFI);
    CHECK(labels[0].regulation_tags == std::set<Regulation>{Regulation::PCI_DSS});
    CHECK(c.classify_text("4111 1111 1111 1112").empty());
    CHECK(c.classify_text("").empty());
}

TEST_CASE("luhn agrees with the digit-sum oracle") {
    std::mt19937_64 rng(17);
    int valid = 0;
    for (int i = 0; i < 20000; ++i) {
        std::string d(16, '0');
        for (auto& ch : d) ch = static_cast<char>('0' + rng() % 10);
        if (d[0] == '0') d[0] = '4';
        const bool want = luhn_oracle(d);
        valid += want;
        CHECK(luhn_valid(d) == want);
        const std::string spaced = d.substr(0, 4) + " " + d.substr(4, 4) + " " + d.substr(8, 4) + " " + d.substr(12);
        CHECK(luhn_valid(spaced) == want);
    }
    CHECK(valid > 1000);
    CHECK_FALSE(luhn_valid("0"));
}

TEST_CASE("ssn validator") {
    CHECK(ssn_valid("123-45-6789"));
    CHECK_FALSE(ssn_valid("000-45-6789"));
    CHECK_FALSE(ssn_valid("123-00-6789"));
    CHECK_FALSE(ssn_valid("123-45-0000"));
    CHECK_FALSE(ssn_valid("12-345-6789"));
}

TEST_CASE("metadata keywords") {
    SensitivityClassifier c;
    auto phi = c.classify_metadata("patients_2024.xlsx", "");
    REQUIRE(phi.size() == 1);
    CHECK(phi[0].category == DataCategory::PHI);
    CHECK(phi[0].confidence == doctest::Approx(0.5));
    CHECK(c.classify_metadata("notes.txt", "").empty());

    auto path = c.classify_metadata("x.csv", "/hr/salaries/");
    REQUIRE(path.size() == 1);
    CHECK(path[0].category == DataCategory::PII);
    CHECK(path[0].confidence == doctest::Approx(0.5));
    CHECK(path[0].evidence[0].field == EvidenceField::Path);
}

TEST_CASE("label merge keeps the max per category") {
    SensitivityClassifier c;
    auto meta = c.classify_metadata("patient_list.txt", "");
    auto text = c.classify_text("patient MRN:00123456");
    auto merged = merge_labels(meta, text);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].category == DataCategory::PHI);
    CHECK(merged[0].confidence == doctest::Approx(0.9));

    CHECK(merge_labels({}, {}).empty());

    auto both = merge_labels(c.classify_text("SSN: 123-45-6789"), c.classify_metadata("bank_export.csv", ""));
    REQUIRE(both.size() == 2);
    CHECK(find(both, DataCategory::PII));
    CHECK(find(both, DataCategory::PFI));
}

TEST_CASE("classification properties") {
    SensitivityClassifier c;
    const std::vector<std::string> pieces{
        "SSN: 123-45-6789", "card number 4111 1111 1111 1111", "contact bob@example.com", "patient MRN 12345678",
        "diagnosis E11.9", "iban DE89370400440532013000", "lunch menu", "quarterly roadmap", "   ", "visa"};
    const std::vector<std::pair<std::string, std::string>> metas{
        {"notes.txt", ""}, {"payroll.xls", ""}, {"x.csv", "/hr/salaries/"}, {"scan.pdf", "/clinical/"}, {"a", "/b/"}};
    std::mt19937 rng(23);
    for (int i = 0; i < 400; ++i) {
        std::string text;
        const int k = static_cast<int>(rng() % 4);
        for (int j = 0; j < k; ++j) text += pieces[rng() % pieces.size()] + " ";
        const auto& [name, path] = metas[rng() % metas.size()];

        auto labels = c.classify_text(text);
        CHECK(labels == c.classify_text(text));
        for (const auto& l : labels) {
            CHECK(l.confidence >= 0.0);
            CHECK(l.confidence <= 1.0);
            REQUIRE_FALSE(l.evidence.empty());
            for (const auto& s : l.evidence) {
                CHECK(s.begin < s.end);
                CHECK(s.end <= text.size());
            }
            CHECK(l.regulation_tags == std::set<Regulation>{regulation_for(l.category)});
        }

        FileMeta meta;
        meta.file_id = "f";
        meta.name = name;
        meta.path = path;
        auto bare = c.classify_file(meta, std::nullopt, from_epoch(0));
        auto full = c.classify_file(meta, text, from_epoch(0));
        for (const auto& l : bare.labels) {
            const auto* kept = find(full.labels, l.category);
            REQUIRE(kept);
            CHECK(kept->confidence >= l.confidence);
        }
    }
}

TEST_CASE("pattern config loads") {
    auto cfg = SensitivityConfig::load(irm::test::config_file("patterns.json"));
    CHECK(cfg.context_window == 50);
    CHECK(cfg.patterns.size() == SensitivityConfig::defaults().patterns.size());
    CHECK_THROWS_AS(SensitivityConfig::from_json_text("{\"patterns\": [{\"name\": \"x\"}]}"), Error);
}
