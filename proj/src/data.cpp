#include "paramask/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "json.hpp"
#include "paramask/errors.hpp"

namespace paramask::data {

using nlohmann::json;

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw UserError("unknown split '" + s + "' (expected train, dev or test)");
}

const std::vector<std::string>& default_articles() {
  // Convention articles with violable obligations plus the Protocol articles.
  static const std::vector<std::string> kArticles = {
      "1",    "2",    "3",    "4",    "5",    "6",    "7",    "8",
      "9",    "10",   "11",   "12",   "13",   "14",   "17",   "18",
      "34",   "38",   "41",   "46",   "P1-1", "P1-2", "P1-3", "P4-1",
      "P4-2", "P4-3", "P4-4", "P6-1", "P6-2", "P6-3", "P7-1", "P7-2",
      "P7-3", "P7-4", "P7-5", "P12-1", "P13-1", "P13-2", "P13-3", "P13-4"};
  return kArticles;
}

std::vector<std::string> synth_label_names(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) out.push_back("A" + std::to_string(i));
  return out;
}

namespace {

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<std::size_t> read_index_list(const json& arr, std::size_t n_facts,
                                         const std::string& where) {
  std::vector<std::size_t> out;
  for (const auto& e : arr) {
    if (!e.is_number_integer() || e.get<long long>() < 0)
      throw UserError(where + ": rationale indices must be nonnegative integers");
    auto idx = e.get<std::size_t>();
    if (idx >= n_facts)
      throw UserError(where + ": rationale index " + std::to_string(idx) +
                      " out of range for " + std::to_string(n_facts) + " facts");
    out.push_back(idx);
  }
  return sorted_unique(std::move(out));
}

}  // namespace

std::vector<Case> load_corpus(const std::string& path,
                              const std::vector<std::string>& label_names) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open corpus file " + path);

  std::unordered_map<std::string, std::size_t> label_index;
  for (std::size_t i = 0; i < label_names.size(); ++i) label_index[label_names[i]] = i;

  std::vector<Case> cases;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw UserError(where + ": malformed record: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("facts") || !rec.contains("labels"))
      throw UserError(where + ": record must be an object with facts and labels");

    Case c;
    c.case_id = rec.value("case_id", "case-" + std::to_string(line_no));
    if (!rec["facts"].is_array() || rec["facts"].empty())
      throw UserError(where + ": facts must be a nonempty list of paragraphs");
    for (const auto& f : rec["facts"]) {
      if (!f.is_string()) throw UserError(where + ": facts must be strings");
      c.facts.push_back(f.get<std::string>());
    }

    c.labels.assign(label_names.size(), 0.0);
    if (!rec["labels"].is_array())
      throw UserError(where + ": labels must be a list of article names");
    std::vector<std::string> unknown;
    for (const auto& l : rec["labels"]) {
      if (!l.is_string()) throw UserError(where + ": labels must be article-name strings");
      auto it = label_index.find(l.get<std::string>());
      if (it == label_index.end())
        unknown.push_back(l.get<std::string>());
      else
        c.labels[it->second] = 1.0;
    }
    if (!unknown.empty()) {
      std::string msg = where + ": unknown article names:";
      for (const auto& u : unknown) msg += " " + u;
      throw UserError(msg);
    }

    if (rec.contains("silver_rationales"))
      c.silver_rationale = read_index_list(rec["silver_rationales"], c.facts.size(), where);
    if (rec.contains("gold_rationales"))
      c.gold_rationale = read_index_list(rec["gold_rationales"], c.facts.size(), where);
    if (rec.contains("split")) c.split = parse_split(rec["split"].get<std::string>());
    cases.push_back(std::move(c));
  }
  return cases;
}

void write_corpus(const std::string& path, const std::vector<Case>& cases,
                  const std::vector<std::string>& label_names) {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write corpus file " + path);
  for (const Case& c : cases) {
    json rec;
    rec["case_id"] = c.case_id;
    rec["facts"] = c.facts;
    json labels = json::array();
    for (std::size_t i = 0; i < c.labels.size(); ++i)
      if (c.labels[i] > 0.5) labels.push_back(label_names.at(i));
    rec["labels"] = labels;
    if (c.silver_rationale) rec["silver_rationales"] = *c.silver_rationale;
    if (c.gold_rationale) rec["gold_rationales"] = *c.gold_rationale;
    rec["split"] = split_name(c.split);
    out << rec.dump() << "\n";
  }
}

std::vector<std::size_t> extract_silver_rationales(const std::string& decision_text,
                                                   std::size_t n_facts) {
  // One reference block: "paragraph(s)" followed by numbers joined by commas,
  // "and", or ranges with a hyphen or en dash.
  static const std::regex kBlock(
      R"(paragraphs?\s+(\d+(?:\s*(?:-|–)\s*\d+)?(?:(?:\s*,\s*(?:and\s+)?|\s+and\s+)\d+(?:\s*(?:-|–)\s*\d+)?)*))",
      std::regex::icase);
  static const std::regex kItem(R"((\d+)(?:\s*(?:-|–)\s*(\d+))?)");

  std::vector<std::size_t> out;
  auto begin = std::sregex_iterator(decision_text.begin(), decision_text.end(), kBlock);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    std::string list = (*it)[1].str();
    auto items = std::sregex_iterator(list.begin(), list.end(), kItem);
    for (auto jt = items; jt != std::sregex_iterator(); ++jt) {
      long lo = std::stol((*jt)[1].str());
      long hi = (*jt)[2].matched ? std::stol((*jt)[2].str()) : lo;
      for (long n = lo; n <= hi; ++n) {
        if (n < 1) continue;  // decision text numbers paragraphs from 1
        auto idx = static_cast<std::size_t>(n - 1);
        if (idx < n_facts) out.push_back(idx);
      }
    }
  }
  return sorted_unique(std::move(out));
}

std::string render_references(const std::vector<std::size_t>& indices) {
  if (indices.empty()) return "";
  std::ostringstream os;
  os << (indices.size() == 1 ? "See paragraph " : "See paragraphs ");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0) os << (i + 1 == indices.size() ? " and " : ", ");
    os << indices[i] + 1;
  }
  os << ".";
  return os.str();
}

CorpusStats corpus_stats(const std::vector<Case>& cases, std::size_t n_labels) {
  CorpusStats s;
  s.n_cases = cases.size();
  s.label_counts.assign(n_labels, 0);
  if (cases.empty()) return s;
  double facts = 0.0, alleg = 0.0, sparsity = 0.0;
  std::size_t with_silver = 0;
  for (const Case& c : cases) {
    facts += static_cast<double>(c.facts.size());
    for (std::size_t l = 0; l < c.labels.size() && l < n_labels; ++l)
      if (c.labels[l] > 0.5) {
        alleg += 1.0;
        ++s.label_counts[l];
      }
    if (c.silver_rationale) {
      sparsity += 100.0 * static_cast<double>(c.silver_rationale->size()) /
                  static_cast<double>(c.facts.size());
      ++with_silver;
    }
  }
  s.mean_facts = facts / static_cast<double>(cases.size());
  s.mean_allegations = alleg / static_cast<double>(cases.size());
  s.silver_sparsity_pct =
      with_silver ? sparsity / static_cast<double>(with_silver) : 0.0;
  return s;
}

std::string render_stats(const CorpusStats& s, const std::vector<std::string>& label_names) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "cases              " << s.n_cases << "\n";
  os << "mean paragraphs    " << s.mean_facts << "\n";
  os << "silver sparsity    " << s.silver_sparsity_pct << "%\n";
  os << "mean allegations   " << s.mean_allegations << "\n";
  os << "label histogram:\n";
  for (std::size_t i = 0; i < s.label_counts.size(); ++i)
    if (s.label_counts[i] > 0)
      os << "  " << label_names.at(i) << "  " << s.label_counts[i] << "\n";
  return os.str();
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text, std::size_t max_tokens) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text)) {
    if (max_tokens && ids.size() >= max_tokens) break;
    ids.push_back(lookup(tok));
  }
  return ids;
}

Vocabulary build_vocabulary(const std::vector<Case>& cases, std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;  // ordered for deterministic ties
  for (const Case& c : cases)
    for (const std::string& fact : c.facts)
      for (const auto& tok : tokenize(fact)) ++freq[tok];

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  v.id_to_token = {"<pad>", "<unk>"};
  for (const auto& [tok, n] : kept) v.id_to_token.push_back(tok);
  for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  return v;
}

}  // namespace paramask::data
