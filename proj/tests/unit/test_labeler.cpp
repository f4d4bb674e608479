#include <recbm/chat.hpp>
#include <recbm/error.hpp>
#include <recbm/labeler.hpp>
#include <recbm/util.hpp>

#include "scratch.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fmt/format.h>

using namespace recbm;

namespace {

std::vector<CandidateConcept> named(std::initializer_list<const char*> names) {
    std::vector<CandidateConcept> out;
    for (const char* n : names) out.push_back({n, "", std::nullopt, false, std::nullopt, {}});
    return out;
}

// Two-atom dictionary over the coordinate axes of a 2-d space.
SparseDictionary axis_dictionary() {
    SparseDictionary d;
    d.atoms = Eigen::MatrixXd::Identity(2, 2);
    d.encoder_weights = Eigen::MatrixXd::Identity(2, 2);
    d.encoder_bias = Eigen::VectorXd::Zero(2);
    return d;
}

nlohmann::json reply(const std::string& text) { return {{"content", text}}; }

}  // namespace

TEST(Prompts, TemplatesAreFilled) {
    const auto describe = describe_prompt("bird");
    EXPECT_NE(describe.find("bird classification"), std::string::npos);
    EXPECT_EQ(describe.find("{{"), std::string::npos);

    const auto summary = summarize_prompt({"a red bird", "a red wing"}, "bird");
    EXPECT_NE(summary.find("- a red bird\n- a red wing"), std::string::npos);
    EXPECT_NE(summary.find("step by step"), std::string::npos);
    EXPECT_EQ(summary.find("{{"), std::string::npos);

    auto cands = named({"red wing", "grassy background"});
    cands[0].description = "wing with red feathers";
    const auto score = score_prompt(cands, "bird");
    EXPECT_NE(score.find("1. red wing: wing with red feathers\n2. grassy background"), std::string::npos);
    EXPECT_NE(score.find("background"), std::string::npos);
    EXPECT_NE(score.find("1 to 10"), std::string::npos);
}

TEST(Prompts, FillTemplateRepeatsAndLeavesUnknown) {
    EXPECT_EQ(fill_template("{{a}}-{{a}}-{{b}}", {{"a", "x{{a}}"}}), "x{{a}}-x{{a}}-{{b}}");
}

TEST(CandidateList, NumberedWithDescriptions) {
    const auto r = parse_candidate_list("Thinking first.\n1. Red Crown: top of head is red\n2) **webbed feet**\n");
    ASSERT_EQ(r.candidates.size(), 2u);
    EXPECT_EQ(r.candidates[0].name, "Red Crown");
    EXPECT_EQ(r.candidates[0].description, "top of head is red");
    EXPECT_EQ(r.candidates[1].name, "webbed feet");
    EXPECT_TRUE(r.warnings.empty());
}

TEST(CandidateList, BulletsAndPlainLines) {
    EXPECT_EQ(parse_candidate_list("- a\n* b\n").candidates.size(), 2u);
    const auto plain = parse_candidate_list("striped tail\nlong beak: curved\n");
    ASSERT_EQ(plain.candidates.size(), 2u);
    EXPECT_EQ(plain.candidates[1].description, "curved");
}

TEST(CandidateList, LongNamesAndEmptyText) {
    const auto r = parse_candidate_list("1. one two three four five six seven eight nine ten eleven twelve thirteen\n2. ok\n");
    ASSERT_EQ(r.candidates.size(), 1u);
    EXPECT_EQ(r.warnings.size(), 1u);
    const auto empty = parse_candidate_list("");
    EXPECT_TRUE(empty.candidates.empty());
    ASSERT_EQ(empty.warnings.size(), 1u);
    EXPECT_NE(empty.warnings[0].find("no candidate"), std::string::npos);
}

TEST(Scores, ByNameAndNumber) {
    const auto s = parse_scores("1. red wing: 9\n2. grassy background: 2/10\n", named({"red wing", "grassy background"}));
    EXPECT_EQ(s[0].score, 9);
    EXPECT_EQ(s[1].score, 2);
    EXPECT_FALSE(s[0].score_flagged);

    const auto by_number = parse_scores("2. renamed: 7\n1. other: 3", named({"a", "b"}));
    EXPECT_EQ(by_number[0].score, 3);
    EXPECT_EQ(by_number[1].score, 7);
}

TEST(Scores, UnparseableAndMissingDefaultToOneFlagged) {
    const auto s = parse_scores("1. a: ten\n2. b: 11\n", named({"a", "b", "c"}));
    for (const auto& c : s) {
        EXPECT_EQ(c.score, 1) << c.name;
        EXPECT_TRUE(c.score_flagged) << c.name;
    }
}

TEST(Scores, DecorationAndCase) {
    const auto s = parse_scores("- **Red Wing**: **8**\n- blue = 5\n", named({"red wing", "Blue"}));
    EXPECT_EQ(s[0].score, 8);
    EXPECT_EQ(s[1].score, 5);
}

TEST(Scores, RepeatedNamesShareScore) {
    const auto s = parse_scores("1. red wing: 9\n", named({"red wing", "x", "Red Wing"}));
    EXPECT_EQ(s[0].score, 9);
    EXPECT_EQ(s[2].score, 9);
    EXPECT_TRUE(s[1].score_flagged);
}

TEST(Scores, FortyBatchKeepsArity) {
    std::vector<CandidateConcept> cands;
    std::string text;
    for (int i = 0; i < 40; ++i) {
        cands.push_back({fmt::format("concept {}", i), "", std::nullopt, false, std::nullopt, {}});
        if (i % 3 != 0) text += fmt::format("{}. concept {}: {}\n", i + 1, i, 1 + i % 10);
    }
    const auto s = parse_scores(text, cands);
    ASSERT_EQ(s.size(), 40u);
    for (int i = 0; i < 40; ++i) {
        EXPECT_EQ(s[i].name, cands[i].name);
        EXPECT_EQ(s[i].score, i % 3 == 0 ? 1 : 1 + i % 10);
        EXPECT_EQ(s[i].score_flagged, i % 3 == 0);
    }
}

TEST(Filter, ThresholdAndDuplicates) {
    auto c = named({"a", "b", "A", "c"});
    c[0].score = 7;
    c[1].score = 5;
    c[2].score = 9;
    c[3].score = 6;
    const auto kept = filter_candidates(c, 6);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0].name, "a");
    EXPECT_EQ(kept[1].name, "c");
    EXPECT_TRUE(filter_candidates(named({"unscored"}), 1).empty());
    EXPECT_THROW(filter_candidates(c, 0), ConfigError);
    EXPECT_THROW(filter_candidates(c, 11), ConfigError);
}

TEST(Filter, BackgroundShortcutIsDropped) {
    auto c = parse_scores("1. red wing: 9\n2. grassy background: 2\n", named({"red wing", "grassy background"}));
    const auto kept = filter_candidates(c, 6);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].name, "red wing");
}

TEST(Cache, WarmCacheSkipsRequests) {
    Scratch dir;
    write_file(dir / "a.ppm", "aaa");
    write_file(dir / "b.ppm", "bbb");
    const nlohmann::json transcript{
        {"rules", {{{"stage", "describe"}, {"image_sha256", image_hash(dir / "a.ppm")}, {"response", reply("an A")}},
                   {{"stage", "describe"}, {"response", reply("something else")}}}}};
    ChatEndpointConfig cfg;
    const std::vector<std::filesystem::path> images{dir / "a.ppm", dir / "b.ppm"};
    {
        auto client = MockChatClient::from_json(transcript.dump());
        DescriptionCache cache(dir / "cache.json");
        EXPECT_EQ(describe_images(*client, cfg, images, "bird", &cache), (std::vector<std::string>{"an A", "something else"}));
        EXPECT_EQ(client->request_count(), 2u);
    }
    auto client = MockChatClient::from_json(R"({"rules": []})");
    DescriptionCache warm(dir / "cache.json");
    EXPECT_EQ(warm.size(), 2u);
    EXPECT_EQ(describe_images(*client, cfg, images, "bird", &warm)[0], "an A");
    EXPECT_EQ(client->request_count(), 0u);

    // A different prompt (task) misses the cache.
    EXPECT_THROW(describe_images(*client, cfg, images, "car", &warm), TransportError);
}

TEST(Cache, KeyDependsOnEveryPart) {
    const auto k = DescriptionCache::key("m", "h", "p");
    EXPECT_NE(k, DescriptionCache::key("m2", "h", "p"));
    EXPECT_NE(k, DescriptionCache::key("m", "h2", "p"));
    EXPECT_NE(k, DescriptionCache::key("m", "h", "p2"));
    EXPECT_EQ(k, DescriptionCache::key("m", "h", "p"));
}

TEST(Cache, MalformedFileIsFormatError) {
    Scratch dir;
    write_file(dir / "c.json", "[1,");
    EXPECT_THROW(DescriptionCache(dir / "c.json"), FormatError);
}

namespace {

std::string atoms_transcript(const Scratch& dir) {
    nlohmann::json rules = nlohmann::json::array();
    for (int i = 0; i < 4; ++i) {
        const auto p = dir / fmt::format("img{}.ppm", i);
        rules.push_back({{"stage", "describe"},
                         {"image_sha256", image_hash(p)},
                         {"response", reply(i < 2 ? "a bird with a red crown" : "a bird on grass")}});
    }
    rules.push_back({{"stage", "summarize"},
                     {"contains", "red crown"},
                     {"response", reply("1. red crown: crown feathers are red\n2. perched pose: sitting")}});
    rules.push_back({{"stage", "summarize"},
                     {"response", reply("1. grassy background: green grass\n2. red crown: again")}});
    rules.push_back({{"stage", "score"},
                     {"response", reply("1. red crown: 9\n2. perched pose: 6\n3. grassy background: 2\n4. red crown: 9")}});
    return nlohmann::json{{"rules", rules}}.dump();
}

}  // namespace

TEST(LabelAtoms, FullChainWithMock) {
    Scratch dir;
    std::vector<std::filesystem::path> paths;
    for (int i = 0; i < 4; ++i) {
        paths.push_back(dir / fmt::format("img{}.ppm", i));
        write_file(paths.back(), fmt::format("image {}", i));
    }
    Eigen::MatrixXd probe(4, 2);
    probe << 1, 0, 0.9, 0.1, 0.1, 0.9, 0, 1;
    LabelOptions opts;
    opts.top_k = 2;
    ChatEndpointConfig cfg;
    auto client = MockChatClient::from_json(atoms_transcript(dir));
    const auto r = label_atoms(*client, cfg, axis_dictionary(), probe, paths, opts);
    ASSERT_EQ(r.scored.size(), 4u);
    EXPECT_EQ(r.scored[0].source_atom, 0u);
    EXPECT_EQ(r.scored[2].source_atom, 1u);
    ASSERT_EQ(r.kept.size(), 2u);
    EXPECT_EQ(r.kept[0].name, "red crown");
    EXPECT_EQ(r.kept[1].name, "perched pose");
    EXPECT_EQ(client->request_count(), 4u + 2u + 1u);
}

TEST(LabelAtoms, ReplayIsByteDeterministic) {
    Scratch dir;
    std::vector<std::filesystem::path> paths;
    for (int i = 0; i < 4; ++i) {
        paths.push_back(dir / fmt::format("img{}.ppm", i));
        write_file(paths.back(), fmt::format("image {}", i));
    }
    Eigen::MatrixXd probe(4, 2);
    probe << 1, 0, 0.9, 0.1, 0.1, 0.9, 0, 1;
    LabelOptions opts;
    opts.top_k = 2;
    ChatEndpointConfig cfg;
    std::string first;
    for (int run = 0; run < 2; ++run) {
        cfg.max_in_flight = run == 0 ? 1 : 4;
        auto client = MockChatClient::from_json(atoms_transcript(dir));
        const auto r = label_atoms(*client, cfg, axis_dictionary(), probe, paths, opts);
        const auto json = candidates_json(r.scored, "h");
        if (run == 0) first = json;
        else EXPECT_EQ(json, first);
    }
}

TEST(LabelAtoms, Validation) {
    ChatEndpointConfig cfg;
    auto client = MockChatClient::from_json(R"({"rules": []})");
    LabelOptions opts;
    EXPECT_THROW(label_atoms(*client, cfg, axis_dictionary(), Eigen::MatrixXd::Ones(2, 2), {"x"}, opts), ShapeError);
    opts.top_k = 0;
    EXPECT_THROW(label_atoms(*client, cfg, axis_dictionary(), Eigen::MatrixXd::Ones(1, 2), {"x"}, opts), ConfigError);
}

TEST(CandidatesJson, RoundTrip) {
    auto c = named({"red crown", "external one"});
    c[0].description = "desc";
    c[0].score = 8;
    c[0].source_atom = 3;
    c[1].score_flagged = true;
    c[1].score = 1;
    const auto text = candidates_json(c, "deadbeef");
    const auto doc = nlohmann::json::parse(text);
    EXPECT_EQ(doc["prompt_version"], prompts::kVersion);
    EXPECT_EQ(doc["config_hash"], "deadbeef");
    EXPECT_EQ(doc["candidates"][1]["source_atom"], "external");
    const auto back = parse_candidates_json(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].name, "red crown");
    EXPECT_EQ(back[0].description, "desc");
    EXPECT_EQ(back[0].score, 8);
    EXPECT_EQ(back[0].source_atom, 3u);
    EXPECT_FALSE(back[1].source_atom);
    EXPECT_TRUE(back[1].score_flagged);
    EXPECT_THROW(parse_candidates_json("{}"), FormatError);
    EXPECT_THROW(parse_candidates_json(R"({"candidates":[{"name":"x","score":12}]})"), FormatError);
}
