#include "recbm/labeler.hpp"

#include "recbm/error.hpp"
#include "recbm/util.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <iostream>
#include <regex>
#include <sstream>
#include <unordered_set>

namespace recbm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Markdown emphasis and quotes that chat models like to wrap names in.
std::string strip_decoration(const std::string& s) {
    std::string t = trim(s);
    while (!t.empty() && (t.front() == '*' || t.front() == '"' || t.front() == '`' || t.front() == '\'')) t.erase(0, 1);
    while (!t.empty() && (t.back() == '*' || t.back() == '"' || t.back() == '`' || t.back() == '\'')) t.pop_back();
    return trim(t);
}

std::size_t word_count(const std::string& s) {
    std::istringstream is(s);
    std::size_t n = 0;
    std::string w;
    while (is >> w) ++n;
    return n;
}

struct ListLine {
    std::optional<std::size_t> number;
    bool enumerated = false;
    std::string body;
};

std::vector<ListLine> split_list(const std::string& text) {
    static const std::regex enumerator(R"(^\s*(?:(\d+)\s*[.)]|[-*])\s+(.*)$)");
    std::vector<ListLine> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty()) continue;
        std::smatch m;
        ListLine item;
        if (std::regex_match(line, m, enumerator)) {
            item.enumerated = true;
            if (m[1].matched) item.number = std::stoul(m[1].str());
            item.body = trim(m[2].str());
        } else {
            item.body = line;
        }
        out.push_back(std::move(item));
    }
    return out;
}

std::optional<int> parse_score_value(const std::string& raw) {
    static const std::regex number(R"(^(\d{1,2})(?:\s*/\s*10)?\.?$)");
    std::smatch m;
    const std::string s = strip_decoration(raw);
    if (!std::regex_match(s, m, number)) return std::nullopt;
    const int v = std::stoi(m[1].str());
    if (v < 1 || v > 10) return std::nullopt;
    return v;
}

}  // namespace

DescriptionCache::DescriptionCache(std::filesystem::path file) : file_(std::move(file)) {
    std::error_code ec;
    if (!std::filesystem::exists(*file_, ec)) return;
    try {
        entries_ = nlohmann::json::parse(read_file(*file_)).get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("description cache {} is malformed: {}", file_->string(), e.what()));
    }
}

std::string DescriptionCache::key(const std::string& model, const std::string& image_hash, const std::string& prompt) {
    return sha256_hex(model + '\n' + image_hash + '\n' + sha256_hex(prompt));
}

std::optional<std::string> DescriptionCache::get(const std::string& key) const {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
}

void DescriptionCache::put(const std::string& key, const std::string& description) {
    std::unique_lock lock(mutex_);
    entries_[key] = description;
}

std::size_t DescriptionCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

void DescriptionCache::save() const {
    if (!file_) return;
    std::unique_lock lock(mutex_);
    write_file(*file_, nlohmann::json(entries_).dump(2) + "\n");
}

std::string fill_template(std::string text, const std::map<std::string, std::string>& values) {
    for (const auto& [name, value] : values) {
        const std::string token = "{{" + name + "}}";
        for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + value.size())) {
            text.replace(pos, token.size(), value);
        }
    }
    return text;
}

std::string describe_prompt(const std::string& task) {
    return fill_template(prompts::describe_template(), {{"task", task}});
}

std::string summarize_prompt(const std::vector<std::string>& descriptions, const std::string& task) {
    std::string listing;
    for (const auto& d : descriptions) listing += "- " + d + "\n";
    return fill_template(prompts::summarize_template(), {{"task", task}, {"descriptions", trim(listing)}});
}

std::string score_prompt(const std::vector<CandidateConcept>& candidates, const std::string& task) {
    std::string listing;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        listing += fmt::format("{}. {}", i + 1, candidates[i].name);
        if (!candidates[i].description.empty()) listing += ": " + candidates[i].description;
        listing += '\n';
    }
    return fill_template(prompts::score_template(), {{"task", task}, {"candidates", trim(listing)}});
}

std::vector<std::string> describe_images(ChatClient& client, const ChatEndpointConfig& cfg,
                                         const std::vector<std::filesystem::path>& images, const std::string& task,
                                         DescriptionCache* cache) {
    const std::string prompt = describe_prompt(task);
    std::vector<std::string> out(images.size());
    parallel_for(images.size(), std::max<std::size_t>(1, cfg.max_in_flight), [&](std::size_t i) {
        const std::string cache_key = DescriptionCache::key(cfg.model, image_hash(images[i]), prompt);
        if (cache) {
            if (auto hit = cache->get(cache_key)) {
                out[i] = *hit;
                return;
            }
        }
        ChatRequest req{"describe", cfg.model, {{"user", prompt, images[i]}}};
        out[i] = trim(client.complete(req));
        if (cache) cache->put(cache_key, out[i]);
    });
    if (cache) cache->save();
    return out;
}

SummaryResult parse_candidate_list(const std::string& text) {
    SummaryResult result;
    const auto lines = split_list(text);
    const bool any_enumerated = std::any_of(lines.begin(), lines.end(), [](const ListLine& l) { return l.enumerated; });
    for (const auto& line : lines) {
        if (any_enumerated && !line.enumerated) continue;
        CandidateConcept c;
        const auto colon = line.body.find(':');
        c.name = strip_decoration(line.body.substr(0, colon));
        if (colon != std::string::npos) c.description = trim(line.body.substr(colon + 1));
        if (c.name.empty()) continue;
        if (word_count(c.name) > 12) {
            result.warnings.push_back(fmt::format("dropped over-long concept name '{}'", c.name));
            continue;
        }
        result.candidates.push_back(std::move(c));
    }
    if (result.candidates.empty()) result.warnings.push_back("summary produced no candidate concepts");
    return result;
}

SummaryResult summarize_concept(ChatClient& client, const ChatEndpointConfig& cfg,
                                const std::vector<std::string>& descriptions, const std::string& task) {
    if (descriptions.empty()) throw ConfigError("summarize needs at least one description");
    ChatRequest req{"summarize", cfg.model, {{"user", summarize_prompt(descriptions, task), std::nullopt}}};
    return parse_candidate_list(client.complete(req));
}

std::vector<CandidateConcept> parse_scores(const std::string& text, std::vector<CandidateConcept> candidates) {
    std::vector<bool> assigned(candidates.size(), false);
    auto assign = [&](std::size_t i, const std::string& raw) {
        assigned[i] = true;
        if (auto v = parse_score_value(raw)) {
            candidates[i].score = *v;
            candidates[i].score_flagged = false;
        } else {
            candidates[i].score = 1;
            candidates[i].score_flagged = true;
        }
    };
    for (const auto& line : split_list(text)) {
        auto sep = line.body.rfind(':');
        if (sep == std::string::npos) sep = line.body.rfind('=');
        if (sep == std::string::npos) continue;
        const std::string name = lower(strip_decoration(line.body.substr(0, sep)));
        const std::string value = line.body.substr(sep + 1);
        std::optional<std::size_t> target;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (!assigned[i] && lower(candidates[i].name) == name) {
                target = i;
                break;
            }
        }
        if (!target && line.number && *line.number >= 1 && *line.number <= candidates.size() &&
            !assigned[*line.number - 1]) {
            target = *line.number - 1;
        }
        if (!target) continue;
        // Repeated names in one batch share the score given to the first.
        const std::string key = lower(candidates[*target].name);
        for (std::size_t i = *target; i < candidates.size(); ++i) {
            if (!assigned[i] && lower(candidates[i].name) == key) assign(i, value);
        }
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!assigned[i]) {
            candidates[i].score = 1;
            candidates[i].score_flagged = true;
        }
    }
    return candidates;
}

std::vector<CandidateConcept> score_concepts(ChatClient& client, const ChatEndpointConfig& cfg,
                                             const std::vector<CandidateConcept>& candidates, const std::string& task) {
    if (candidates.empty()) throw ConfigError("score needs at least one candidate");
    ChatRequest req{"score", cfg.model, {{"user", score_prompt(candidates, task), std::nullopt}}};
    auto scored = parse_scores(client.complete(req), candidates);
    for (const auto& c : scored) {
        if (c.score_flagged) std::clog << "[recbm] could not parse a score for '" << c.name << "'; using 1\n";
    }
    return scored;
}

std::vector<CandidateConcept> filter_candidates(const std::vector<CandidateConcept>& candidates, int threshold) {
    if (threshold < 1 || threshold > 10) throw ConfigError(fmt::format("score threshold {} outside [1, 10]", threshold));
    std::vector<CandidateConcept> kept;
    std::unordered_set<std::string> seen;
    for (const auto& c : candidates) {
        if (!c.score || *c.score < threshold) continue;
        if (!seen.insert(lower(c.name)).second) continue;
        kept.push_back(c);
    }
    return kept;
}

LabelResult label_atoms(ChatClient& client, const ChatEndpointConfig& cfg, const SparseDictionary& dict,
                        const Eigen::MatrixXd& probe_images, const std::vector<std::filesystem::path>& image_paths,
                        const LabelOptions& opts, DescriptionCache* cache) {
    if (static_cast<std::size_t>(probe_images.rows()) != image_paths.size()) {
        throw ShapeError(fmt::format("{} image paths for {} probing embeddings", image_paths.size(), probe_images.rows()));
    }
    if (opts.top_k == 0) throw ConfigError("top-k must be at least 1");
    if (opts.score_batch == 0) throw ConfigError("score batch must be at least 1");
    LabelResult result;
    const Eigen::MatrixXd activations = encode_all(dict, probe_images);
    const std::size_t k = std::min<std::size_t>(opts.top_k, image_paths.size());

    std::vector<CandidateConcept> proposed;
    for (std::size_t atom = 0; atom < dict.size(); ++atom) {
        if (activations.col(atom).maxCoeff() <= 0.0) {
            result.warnings.push_back(fmt::format("atom {} is inactive on every probing image", atom));
            continue;
        }
        std::vector<std::filesystem::path> top;
        for (std::size_t idx : top_indices(activations.col(atom), k)) top.push_back(image_paths[idx]);
        const auto descriptions = describe_images(client, cfg, top, opts.task, cache);
        auto summary = summarize_concept(client, cfg, descriptions, opts.task);
        for (auto& w : summary.warnings) result.warnings.push_back(fmt::format("atom {}: {}", atom, w));
        for (auto& c : summary.candidates) {
            c.source_atom = atom;
            proposed.push_back(std::move(c));
        }
    }
    for (std::size_t start = 0; start < proposed.size(); start += opts.score_batch) {
        const auto stop = std::min(proposed.size(), start + opts.score_batch);
        std::vector<CandidateConcept> batch(proposed.begin() + static_cast<std::ptrdiff_t>(start),
                                            proposed.begin() + static_cast<std::ptrdiff_t>(stop));
        for (auto& c : score_concepts(client, cfg, batch, opts.task)) {
            if (c.score_flagged) result.warnings.push_back(fmt::format("unparseable score for '{}'", c.name));
            result.scored.push_back(std::move(c));
        }
    }
    result.kept = filter_candidates(result.scored, opts.score_threshold);
    return result;
}

std::string candidates_json(const std::vector<CandidateConcept>& candidates, const std::string& config_hash) {
    nlohmann::json doc;
    doc["prompt_version"] = prompts::kVersion;
    auto list = nlohmann::json::array();
    for (const auto& c : candidates) {
        nlohmann::json item;
        item["name"] = c.name;
        item["description"] = c.description;
        item["score"] = c.score ? nlohmann::json(*c.score) : nlohmann::json(nullptr);
        item["score_flagged"] = c.score_flagged;
        item["source_atom"] = c.source_atom ? nlohmann::json(*c.source_atom) : nlohmann::json("external");
        list.push_back(std::move(item));
    }
    doc["candidates"] = std::move(list);
    if (!config_hash.empty()) doc["config_hash"] = config_hash;
    return doc.dump(2) + "\n";
}

std::vector<CandidateConcept> parse_candidates_json(const std::string& text) {
    std::vector<CandidateConcept> out;
    try {
        const auto doc = nlohmann::json::parse(text);
        for (const auto& item : doc.at("candidates")) {
            CandidateConcept c;
            c.name = item.at("name").get<std::string>();
            c.description = item.value("description", std::string{});
            if (item.contains("score") && !item["score"].is_null()) {
                const int s = item["score"].get<int>();
                if (s < 1 || s > 10) throw FormatError(fmt::format("score {} for '{}' outside [1, 10]", s, c.name));
                c.score = s;
            }
            c.score_flagged = item.value("score_flagged", false);
            if (item.contains("source_atom") && item["source_atom"].is_number_unsigned()) {
                c.source_atom = item["source_atom"].get<std::size_t>();
            }
            out.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("candidate file is malformed: {}", e.what()));
    }
    return out;
}

}  // namespace recbm
