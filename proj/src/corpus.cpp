// Copyright 2026 The Midtrain Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mt/corpus.hpp"

#include "mt/tensor.hpp"
#include "mt/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace mt {
namespace {

enum class Section { kNone, kIndication, kComparison, kFindings, kImpression };

struct Header {
  std::string_view name;
  Section section;
};
constexpr std::array<Header, 4> kHeaders{{{"indication:", Section::kIndication},
                                          {"comparison:", Section::kComparison},
                                          {"findings:", Section::kFindings},
                                          {"impression:", Section::kImpression}}};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

template <typename Rng>
std::size_t pick(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

template <typename Rng, std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& options) {
  return options[pick(rng, N)];
}

// ---------------------------------------------------------------- radiology

struct Statement {
  std::string finding;
  std::string impression;  // empty: not salient
  std::vector<std::string_view> tags;
};

struct NormalTemplate {
  std::string_view text;
  std::array<std::string_view, 2> tags;
};

constexpr std::array<NormalTemplate, 14> kNormals{{
    {"No pneumothorax.", {"pneumothorax", ""}},
    {"No pleural effusion.", {"effusion", "pleura"}},
    {"No focal consolidation.", {"consolidation", "lungs"}},
    {"No evidence of pulmonary edema.", {"edema", ""}},
    {"Heart size normal.", {"heart", ""}},
    {"Cardiomediastinal silhouette within normal limits.", {"heart", "mediastinum"}},
    {"Lungs clear.", {"lungs", ""}},
    {"No acute osseous abnormality.", {"bone", ""}},
    {"Osseous structures intact.", {"bone", "spine"}},
    {"Hilar contours unremarkable.", {"hilum", ""}},
    {"Trachea midline.", {"trachea", "tube"}},
    {"Without pleural thickening.", {"pleura", ""}},
    {"Negative for free subdiaphragmatic air.", {"abdomen", ""}},
    {"No evidence of mediastinal widening.", {"mediastinum", ""}},
}};

constexpr std::array<std::string_view, 3> kSeverity{"small", "moderate", "large"};
constexpr std::array<std::string_view, 3> kDegree{"mild", "moderate", "marked"};
constexpr std::array<std::string_view, 3> kSide3{"left", "right", "bilateral"};
constexpr std::array<std::string_view, 2> kSide2{"left", "right"};
constexpr std::array<std::string_view, 2> kLobe{"lower lobe", "upper lobe"};
constexpr std::array<std::string_view, 5> kOrdinal{"third", "fourth", "fifth", "sixth", "seventh"};
constexpr std::array<std::string_view, 5> kIndications{"cough", "shortness of breath", "fever", "chest pain",
                                                       "preoperative evaluation"};
constexpr std::array<std::string_view, 4> kNegations{"no evidence of", "negative for", "without", "no"};

constexpr std::size_t kAbnormalKinds = 11;

template <typename Rng>
Statement make_abnormal(std::size_t kind, Rng& rng) {
  switch (kind) {
    case 0: {
      const auto sev = pick(rng, kSeverity);
      const auto side = pick(rng, kSide3);
      return {capitalize(std::string(sev) + " " + std::string(side) + " pleural effusion."),
              capitalize(std::string(sev) + " " + std::string(side) + " effusion."), {"effusion", "pleura"}};
    }
    case 1: {
      const auto side = pick(rng, kSide2);
      const auto lobe = pick(rng, kLobe);
      return {capitalize(std::string(side) + " " + std::string(lobe) + " opacity, concerning for pneumonia."),
              capitalize(std::string(side) + " " + std::string(lobe) + " pneumonia."), {"consolidation", "lungs"}};
    }
    case 2: {
      const auto deg = pick(rng, kDegree);
      return {capitalize(std::string(deg) + " cardiomegaly."), capitalize(std::string(deg) + " cardiomegaly."),
              {"heart"}};
    }
    case 3: {
      const auto deg = pick(rng, kDegree);
      return {capitalize(std::string(deg) + " interstitial pulmonary edema."),
              capitalize(std::string(deg) + " pulmonary edema."), {"edema", "lungs"}};
    }
    case 4: {
      const auto side = pick(rng, kSide2);
      return {capitalize("small " + std::string(side) + " apical pneumothorax."),
              capitalize(std::string(side) + " pneumothorax."), {"pneumothorax"}};
    }
    case 5: {
      const auto side = pick(rng, kSide3);
      return {capitalize(std::string(side) + " basilar atelectasis."),
              capitalize(std::string(side) + " basilar atelectasis."), {"lungs"}};
    }
    case 6: {
      const auto side = pick(rng, kSide2);
      const auto ord = pick(rng, kOrdinal);
      return {capitalize("acute " + std::string(side) + " " + std::string(ord) + " rib fracture."),
              capitalize("acute " + std::string(side) + " rib fracture."), {"bone"}};
    }
    case 7: {
      const auto side = pick(rng, kSide2);
      const int mm = 4 + static_cast<int>(pick(rng, 12));
      return {std::to_string(mm) + " mm nodule in the " + std::string(side) + " upper lobe.",
              capitalize(std::string(side) + " upper lobe nodule, recommend CT."), {"lungs"}};
    }
    case 8:
      return {"Degenerative changes of the thoracic spine.", "", {"spine"}};
    case 9: {
      const auto side = pick(rng, kSide2);
      const auto lobe = pick(rng, kLobe);
      return {"Calcified granuloma in the " + std::string(side) + " " + std::string(lobe) + ".", "", {"granuloma"}};
    }
    default: {
      const int cm = 2 + static_cast<int>(pick(rng, 5));
      return {"Endotracheal tube terminates " + std::to_string(cm) + " cm above the carina.",
              "Endotracheal tube in standard position.", {"tube"}};
    }
  }
}

bool conflicts(const std::set<std::string_view>& used, const std::vector<std::string_view>& tags) {
  for (auto t : tags) {
    if (!t.empty() && used.count(t)) return true;
  }
  return false;
}

template <typename Rng>
Report radiology_report(Rng& rng, std::string id) {
  std::discrete_distribution<int> n_abn({30, 40, 22, 8});
  const int abnormal = n_abn(rng);
  std::vector<Statement> statements;
  std::set<std::string_view> used;
  std::vector<std::size_t> kinds(kAbnormalKinds);
  std::iota(kinds.begin(), kinds.end(), 0);
  std::shuffle(kinds.begin(), kinds.end(), rng);
  for (std::size_t k : kinds) {
    if (static_cast<int>(statements.size()) >= abnormal) break;
    Statement s = make_abnormal(k, rng);
    if (conflicts(used, s.tags)) continue;
    used.insert(s.tags.begin(), s.tags.end());
    statements.push_back(std::move(s));
  }
  const int normals = 3 + static_cast<int>(pick(rng, 3));
  std::vector<std::size_t> order(kNormals.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  int added = 0;
  for (std::size_t i : order) {
    if (added >= normals) break;
    const auto& n = kNormals[i];
    std::vector<std::string_view> tags{n.tags[0], n.tags[1]};
    if (conflicts(used, tags)) continue;
    for (auto t : tags) {
      if (!t.empty()) used.insert(t);
    }
    statements.push_back({std::string(n.text), "", tags});
    ++added;
  }
  std::shuffle(statements.begin(), statements.end(), rng);

  Report r;
  r.id = std::move(id);
  std::string findings, impression;
  for (const auto& s : statements) {
    if (!findings.empty()) findings += ' ';
    findings += s.finding;
    if (!s.impression.empty()) {
      if (!impression.empty()) impression += ' ';
      impression += s.impression;
    }
  }
  if (impression.empty()) impression = "No acute cardiopulmonary process.";
  r.findings = std::move(findings);
  r.impression = std::move(impression);
  if (pick(rng, 2) == 0) r.indication = capitalize(std::string(pick(rng, kIndications)) + ".");
  if (pick(rng, 5) < 2) r.comparison = pick(rng, 2) == 0 ? "None." : "Prior radiograph.";
  return r;
}

// ------------------------------------------------------------------ general

constexpr std::array<std::string_view, 16> kAgents{"farmer",   "teacher",   "merchant",  "traveler",
                                                   "gardener", "painter",   "sailor",    "baker",
                                                   "musician", "librarian", "carpenter", "student",
                                                   "captain",  "poet",      "fisherman", "tailor"};
constexpr std::array<std::string_view, 15> kVerbs{"visited",   "painted",  "repaired",     "described", "organized",
                                                  "celebrated", "discovered", "crossed",  "admired",   "purchased",
                                                  "photographed", "decorated", "cleaned", "borrowed",  "delivered"};
constexpr std::array<std::string_view, 16> kObjects{"bridge",  "festival", "harbor",   "library",  "recipe", "boat",
                                                    "museum",  "garden",   "concert",  "bakery",   "fountain",
                                                    "carriage", "tapestry", "lantern", "orchard",  "violin"};
constexpr std::array<std::string_view, 12> kPlaces{"station", "square",  "valley", "coast",  "village", "castle",
                                                   "stadium", "theater", "market", "island", "meadow",  "cathedral"};
constexpr std::array<std::string_view, 14> kAdjectives{"quiet",   "busy",   "ancient", "bright",   "local",
                                                       "wooden",  "crowded", "famous", "narrow",   "golden",
                                                       "modern",  "cheerful", "elegant", "humble"};
constexpr std::array<std::string_view, 5> kSeasons{"summer", "winter", "spring", "autumn", "harvest"};
constexpr std::array<std::string_view, 5> kQualities{"patience", "enthusiasm", "care", "skill", "humor"};

template <typename Rng>
Report general_document(Rng& rng, std::string id) {
  const int sentences = 3 + static_cast<int>(pick(rng, 3));
  std::string body, summary;
  for (int s = 0; s < sentences; ++s) {
    const std::string agent(pick(rng, kAgents));
    const std::string verb(pick(rng, kVerbs));
    const std::string object(pick(rng, kObjects));
    std::string sentence;
    switch (pick(rng, 4)) {
      case 0:
        sentence = "The " + std::string(pick(rng, kAdjectives)) + " " + agent + " " + verb + " the " + object +
                   " near the " + std::string(pick(rng, kPlaces)) + ".";
        break;
      case 1:
        sentence = "During the " + std::string(pick(rng, kSeasons)) + ", the " + agent + " " + verb + " a " +
                   std::string(pick(rng, kAdjectives)) + " " + object + ".";
        break;
      case 2:
        sentence = "Several neighbors watched as the " + agent + " " + verb + " the " + object + " at the " +
                   std::string(pick(rng, kPlaces)) + ".";
        break;
      default:
        sentence = "Everyone agreed that the " + agent + " " + verb + " the " + object + " with great " +
                   std::string(pick(rng, kQualities)) + ".";
        break;
    }
    if (!body.empty()) body += ' ';
    body += sentence;
    if (s == 0) summary = capitalize(agent) + " " + verb + " the " + object + ".";
  }
  Report r;
  r.id = std::move(id);
  r.findings = std::move(body);
  r.impression = std::move(summary);
  return r;
}

const std::set<std::string>& stop_words() {
  static const std::set<std::string> words{"a",  "an",   "and", "as",   "at",   "by",   "for",  "from", "in",
                                           "is", "it",   "of",  "on",   "or",   "that", "the",  "to",   "was",
                                           "with", "were", "be", "this", "are", "no",   "not", "without"};
  return words;
}

}  // namespace

Report parse_report(std::string_view raw, std::string id) {
  std::array<std::string, 5> buf;
  std::array<bool, 5> seen{};
  Section current = Section::kNone;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t eol = raw.find('\n', pos);
    if (eol == std::string_view::npos) eol = raw.size();
    std::string_view line = raw.substr(pos, eol - pos);
    std::size_t lead = 0;
    while (lead < line.size() && (line[lead] == ' ' || line[lead] == '\t' || line[lead] == '\r')) ++lead;
    const std::string lowered = ascii_lower(line.substr(lead, 12));
    for (const auto& h : kHeaders) {
      if (lowered.rfind(h.name, 0) == 0) {
        current = h.section;
        seen[static_cast<std::size_t>(current)] = true;
        line = line.substr(lead + h.name.size());
        break;
      }
    }
    if (current != Section::kNone) {
      auto& dst = buf[static_cast<std::size_t>(current)];
      dst += ' ';
      dst += line;
    }
    pos = eol + 1;
  }
  Report r;
  r.id = std::move(id);
  r.findings = collapse_whitespace(buf[static_cast<std::size_t>(Section::kFindings)]);
  r.impression = collapse_whitespace(buf[static_cast<std::size_t>(Section::kImpression)]);
  if (r.findings.empty()) throw ParseError("report " + r.id + ": missing findings section");
  if (r.impression.empty()) throw ParseError("report " + r.id + ": missing impression section");
  if (seen[static_cast<std::size_t>(Section::kIndication)]) {
    r.indication = collapse_whitespace(buf[static_cast<std::size_t>(Section::kIndication)]);
  }
  if (seen[static_cast<std::size_t>(Section::kComparison)]) {
    r.comparison = collapse_whitespace(buf[static_cast<std::size_t>(Section::kComparison)]);
  }
  return r;
}

std::string render_report(const Report& report) {
  std::string out;
  if (report.indication) out += "INDICATION: " + *report.indication + "\n";
  if (report.comparison) out += "COMPARISON: " + *report.comparison + "\n";
  out += "FINDINGS: " + report.findings + "\n";
  out += "IMPRESSION: " + report.impression + "\n";
  return out;
}

std::string midtrain_sequence(const Report& report) { return report.findings + " " + report.impression; }

Style parse_style(std::string_view name) {
  if (name == "general") return Style::kGeneral;
  if (name == "radiology") return Style::kRadiology;
  throw std::invalid_argument("unknown corpus style '" + std::string(name) + "' (expected general|radiology)");
}

std::string_view style_name(Style style) { return style == Style::kGeneral ? "general" : "radiology"; }

std::vector<Report> synth_corpus(std::uint64_t seed, Style style, std::size_t n) {
  if (n == 0) throw ContractError("synth_corpus: n must be at least 1");
  std::vector<Report> out;
  out.reserve(n);
  const std::string prefix = style == Style::kGeneral ? "gen" : "rad";
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(style) + 1, i));
    std::ostringstream id;
    id << prefix << '-' << seed << '-' << std::setw(6) << std::setfill('0') << i;
    out.push_back(style == Style::kGeneral ? general_document(rng, id.str()) : radiology_report(rng, id.str()));
  }
  return out;
}

std::span<const std::string_view> negation_phrases() { return kNegations; }

std::vector<std::string> content_words(std::string_view text) {
  std::vector<std::string> out;
  for (auto& w : metric_tokens(text)) {
    if (stop_words().count(w) == 0 && !std::isdigit(static_cast<unsigned char>(w[0]))) out.push_back(std::move(w));
  }
  return out;
}

const std::vector<std::string>& FewShotPlan::at(std::size_t k) const {
  auto it = selected.find(k);
  if (it == selected.end()) throw std::out_of_range("few-shot plan has no subset for k=" + std::to_string(k));
  return it->second;
}

FewShotPlan fewshot_subsets(std::span<const Report> train, std::vector<std::size_t> ks, std::uint64_t seed) {
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (!ks.empty() && ks.back() > train.size()) {
    throw ContractError("fewshot_subsets: k=" + std::to_string(ks.back()) + " exceeds " +
                        std::to_string(train.size()) + " training reports");
  }
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FewShotPlan plan;
  plan.ks = ks;
  plan.seed = seed;
  for (std::size_t k : ks) {
    auto& ids = plan.selected[k];
    for (std::size_t i = 0; i < k; ++i) ids.push_back(train[order[i]].id);
  }
  return plan;
}

std::vector<Report> select_reports(std::span<const Report> train, const FewShotPlan& plan, std::size_t k) {
  std::map<std::string_view, const Report*> by_id;
  for (const auto& r : train) by_id.emplace(r.id, &r);
  std::vector<Report> out;
  for (const auto& id : plan.at(k)) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("few-shot plan refers to unknown report " + id);
    out.push_back(*it->second);
  }
  return out;
}

std::string plan_to_csv(const FewShotPlan& plan) {
  std::string out = "k,report_id\n";
  for (std::size_t k : plan.ks) {
    for (const auto& id : plan.at(k)) out += std::to_string(k) + "," + id + "\n";
  }
  return out;
}

FewShotPlan plan_from_csv(std::string_view csv) {
  std::istringstream is{std::string(csv)};
  std::string line;
  if (!std::getline(is, line) || line != "k,report_id") throw ParseError("plan csv: expected header 'k,report_id'");
  FewShotPlan plan;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("plan csv line " + std::to_string(lineno) + ": missing comma");
    std::size_t k = 0;
    try {
      k = std::stoul(line.substr(0, comma));
    } catch (const std::exception&) {
      throw ParseError("plan csv line " + std::to_string(lineno) + ": bad k");
    }
    if (!plan.selected.count(k)) plan.ks.push_back(k);
    plan.selected[k].push_back(line.substr(comma + 1));
  }
  std::sort(plan.ks.begin(), plan.ks.end());
  return plan;
}

Split split_reports(std::span<const Report> reports, double train_ratio, double validation_ratio,
                    std::uint64_t seed) {
  if (train_ratio < 0 || validation_ratio < 0 || train_ratio + validation_ratio > 1.0) {
    throw ContractError("split_reports: ratios must be non-negative and sum to at most 1");
  }
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = reports.size();
  const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * train_ratio);
  const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * validation_ratio);
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? s.train : (i < n_train + n_val ? s.validation : s.test);
    dst.push_back(reports[order[i]]);
  }
  return s;
}

std::vector<Report> parse_jsonl(std::string_view text) {
  std::vector<Report> out;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (collapse_whitespace(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Report r;
      r.id = j.at("id").get<std::string>();
      r.findings = collapse_whitespace(j.at("findings").get<std::string>());
      r.impression = collapse_whitespace(j.at("impression").get<std::string>());
      if (j.contains("indication") && !j["indication"].is_null()) {
        r.indication = collapse_whitespace(j["indication"].get<std::string>());
      }
      if (j.contains("comparison") && !j["comparison"].is_null()) {
        r.comparison = collapse_whitespace(j["comparison"].get<std::string>());
      }
      if (r.findings.empty()) throw ParseError("missing findings section");
      if (r.impression.empty()) throw ParseError("missing impression section");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Report> load_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_jsonl(ss.str());
}

std::string to_jsonl(std::span<const Report> reports) {
  std::string out;
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    if (r.indication) j["indication"] = *r.indication;
    if (r.comparison) j["comparison"] = *r.comparison;
    j["findings"] = r.findings;
    j["impression"] = r.impression;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_jsonl(const std::filesystem::path& path, std::span<const Report> reports) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_jsonl(reports);
}

std::vector<Report> load_txt_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Report> out;
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    out.push_back(parse_report(ss.str(), f.stem().string()));
  }
  return out;
}

}  // namespace mt
