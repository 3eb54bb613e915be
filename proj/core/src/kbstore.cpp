#include "rdas/kbstore.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rdas/error.hpp"
#include "rdas/rng.hpp"

namespace rdas::kb {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

/// Calls fn(line, line_number) for each line, with a trailing '\r' removed.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line, line_no);
  }
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line) + ": ";
}

bool is_edge_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

}  // namespace

// ---------------------------------------------------------------------------
// KnowledgeBase

std::size_t KnowledgeBase::TripleHash::operator()(const std::array<std::uint32_t, 3>& t) const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint32_t v : t) {
    h ^= v;
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h);
}

EntityId KnowledgeBase::intern_entity(std::string_view surface) {
  auto [it, inserted] = entity_index_.try_emplace(std::string(surface), make_id<EntityId>(entities_.size()));
  if (inserted) {
    entities_.emplace_back(surface);
    incidence_.emplace_back();
  }
  return it->second;
}

RelationId KnowledgeBase::intern_relation(std::string_view surface) {
  auto [it, inserted] =
      relation_index_.try_emplace(std::string(surface), make_id<RelationId>(relations_.size()));
  if (inserted) relations_.emplace_back(surface);
  return it->second;
}

bool KnowledgeBase::add_triple(EntityId subject, RelationId relation, EntityId object) {
  if (index_of(subject) >= entities_.size() || index_of(object) >= entities_.size() ||
      index_of(relation) >= relations_.size()) {
    throw std::out_of_range("KnowledgeBase::add_triple: id out of range");
  }
  const std::array<std::uint32_t, 3> key{static_cast<std::uint32_t>(index_of(subject)),
                                         static_cast<std::uint32_t>(index_of(relation)),
                                         static_cast<std::uint32_t>(index_of(object))};
  if (!triple_set_.insert(key).second) return false;
  const auto id = make_id<TripleId>(triples_.size());
  triples_.push_back({subject, relation, object});
  incidence_[index_of(subject)].push_back(id);
  if (object != subject) incidence_[index_of(object)].push_back(id);
  return true;
}

bool KnowledgeBase::add_triple(std::string_view subject, std::string_view relation,
                               std::string_view object) {
  const EntityId s = intern_entity(subject);
  const RelationId r = intern_relation(relation);
  const EntityId o = intern_entity(object);
  return add_triple(s, r, o);
}

std::optional<EntityId> KnowledgeBase::find_entity(std::string_view surface) const {
  auto it = entity_index_.find(std::string(surface));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeBase::find_relation(std::string_view surface) const {
  auto it = relation_index_.find(std::string(surface));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

KnowledgeBase parse_kb(std::string_view text, std::string_view source) {
  KnowledgeBase kb;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (is_blank(line)) return;
    const auto fields = split(line, '|');
    if (fields.size() != 3) {
      throw DataError(where(source, line_no) + "expected 3 '|'-separated fields, found " +
                      std::to_string(fields.size()));
    }
    for (auto f : fields) {
      if (trim(f).empty()) throw DataError(where(source, line_no) + "empty field");
    }
    kb.add_triple(fields[0], fields[1], fields[2]);
  });
  if (kb.triple_count() == 0) throw DataError(std::string(source) + ": no triples");
  return kb;
}

KnowledgeBase load_kb(const std::filesystem::path& path) { return parse_kb(read_file(path), path.string()); }

std::string format_kb(const KnowledgeBase& kb) {
  std::string out;
  for (const auto& t : kb.triples()) {
    out += kb.entity_name(t.subject);
    out += '|';
    out += kb.relation_name(t.relation);
    out += '|';
    out += kb.entity_name(t.object);
    out += '\n';
  }
  return out;
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) { write_file(path, format_kb(kb)); }

// ---------------------------------------------------------------------------
// Text

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view word = text.substr(i, j - i);
    while (!word.empty() && is_edge_punct(word.front())) word.remove_prefix(1);
    while (!word.empty() && is_edge_punct(word.back())) word.remove_suffix(1);
    if (!word.empty()) {
      std::string token(word);
      for (auto& c : token) {
        if (static_cast<unsigned char>(c) < 128) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      tokens.push_back(std::move(token));
    }
    i = j;
  }
  return tokens;
}

std::string normalize_surface(std::string_view text) {
  std::string out;
  for (const auto& t : tokenize(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::string> question_tokens(std::string_view question) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < question.size()) {
    const auto open = question.find('[', pos);
    const auto close = open == std::string_view::npos ? open : question.find(']', open);
    if (close == std::string_view::npos) {
      auto rest = tokenize(question.substr(pos));
      tokens.insert(tokens.end(), rest.begin(), rest.end());
      break;
    }
    auto before = tokenize(question.substr(pos, open - pos));
    tokens.insert(tokens.end(), before.begin(), before.end());
    tokens.emplace_back(kEntityPlaceholder);
    pos = close + 1;
  }
  return tokens;
}

EntityLinker::EntityLinker(const KnowledgeBase& kb) : kb_(&kb) {
  for (std::size_t i = 0; i < kb.entity_count(); ++i) {
    const auto id = make_id<EntityId>(i);
    std::string key = normalize_surface(kb.entity_name(id));
    if (key.empty()) continue;
    max_tokens_ = std::max<std::size_t>(max_tokens_, std::count(key.begin(), key.end(), ' ') + 1);
    by_surface_[std::move(key)].push_back(id);
  }
}

std::vector<EntityId> EntityLinker::link(std::string_view question) const {
  std::vector<EntityId> found;

  std::size_t pos = 0;
  while (true) {
    const auto open = question.find('[', pos);
    if (open == std::string_view::npos) break;
    const auto close = question.find(']', open);
    if (close == std::string_view::npos) break;
    const std::string_view span = question.substr(open + 1, close - open - 1);
    if (auto id = kb_->find_entity(span)) {
      found.push_back(*id);
    } else if (auto it = by_surface_.find(normalize_surface(span)); it != by_surface_.end()) {
      found.insert(found.end(), it->second.begin(), it->second.end());
    }
    pos = close + 1;
  }

  if (found.empty()) {
    const auto tokens = tokenize(question);
    std::vector<bool> used(tokens.size(), false);
    const std::size_t longest = std::min(max_tokens_, tokens.size());
    for (std::size_t len = longest; len >= 1; --len) {
      for (std::size_t start = 0; start + len <= tokens.size(); ++start) {
        if (std::any_of(used.begin() + start, used.begin() + start + len, [](bool u) { return u; })) {
          continue;
        }
        std::string key = tokens[start];
        for (std::size_t k = start + 1; k < start + len; ++k) key += ' ' + tokens[k];
        auto it = by_surface_.find(key);
        if (it == by_surface_.end()) continue;
        std::fill(used.begin() + start, used.begin() + start + len, true);
        found.insert(found.end(), it->second.begin(), it->second.end());
      }
    }
  }

  if (found.empty()) throw UnlinkableQuestion("no entity surface form found in question: " + std::string(question));
  std::sort(found.begin(), found.end());
  found.erase(std::unique(found.begin(), found.end()), found.end());
  return found;
}

std::vector<EntityId> link_entities(std::string_view question, const KnowledgeBase& kb) {
  if (trim(question).empty()) throw UsageError("link_entities: empty question");
  return EntityLinker(kb).link(question);
}

// ---------------------------------------------------------------------------
// QA files

QASet parse_qa(std::string_view text, const KnowledgeBase& kb, int hops, std::string_view source) {
  QASet set;
  const EntityLinker linker(kb);
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (is_blank(line)) return;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw DataError(where(source, line_no) + "missing tab separator");
    const std::string_view question = line.substr(0, tab);
    std::vector<EntityId> answers;
    for (auto raw : split(line.substr(tab + 1), '|')) {
      if (raw.empty()) continue;
      auto id = kb.find_entity(raw);
      if (!id) throw DataError(where(source, line_no) + "unknown answer entity \"" + std::string(raw) + "\"");
      answers.push_back(*id);
    }
    if (answers.empty()) throw DataError(where(source, line_no) + "empty answer list");
    std::sort(answers.begin(), answers.end());
    answers.erase(std::unique(answers.begin(), answers.end()), answers.end());

    auto tokens = question_tokens(question);
    if (tokens.empty()) throw DataError(where(source, line_no) + "empty question");
    try {
      QAExample ex;
      ex.seeds = linker.link(question);
      ex.text = std::string(question);
      ex.tokens = std::move(tokens);
      ex.answers = std::move(answers);
      ex.hops = hops;
      ex.line = line_no;
      set.examples.push_back(std::move(ex));
    } catch (const UnlinkableQuestion&) {
      set.unlinkable.push_back({std::string(question), std::move(answers), line_no});
    }
  });
  return set;
}

QASet load_qa(const std::filesystem::path& path, const KnowledgeBase& kb, int hops) {
  return parse_qa(read_file(path), kb, hops, path.string());
}

std::string format_qa(const QASet& set, const KnowledgeBase& kb) {
  // Linked and unlinkable questions are written back in original line order.
  std::map<std::size_t, std::string> lines;
  auto answers_text = [&](const std::vector<EntityId>& answers) {
    std::string s;
    for (std::size_t i = 0; i < answers.size(); ++i) {
      if (i) s += '|';
      s += kb.entity_name(answers[i]);
    }
    return s;
  };
  std::size_t fallback = 1u << 30;
  for (const auto& ex : set.examples) lines[ex.line ? ex.line : fallback++] = ex.text + '\t' + answers_text(ex.answers);
  for (const auto& un : set.unlinkable) lines[un.line ? un.line : fallback++] = un.text + '\t' + answers_text(un.answers);
  std::string out;
  for (const auto& [_, line] : lines) out += line + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Subgraphs

Subgraph extract_subgraph(const KnowledgeBase& kb, std::span<const EntityId> seeds, int hops,
                          std::size_t node_budget) {
  if (hops < 1) throw UsageError("extract_subgraph: hops must be >= 1");
  if (seeds.empty()) throw UsageError("extract_subgraph: no seeds");
  if (node_budget < seeds.size()) throw UsageError("extract_subgraph: node budget smaller than seed set");

  Subgraph sub;
  std::vector<bool> in_set(kb.entity_count(), false);
  for (EntityId s : seeds) {
    if (index_of(s) >= kb.entity_count()) {
      throw DataError("extract_subgraph: seed id " + std::to_string(index_of(s)) + " not in KB");
    }
    if (!in_set[index_of(s)]) {
      in_set[index_of(s)] = true;
      sub.seeds.push_back(s);
    }
  }
  std::sort(sub.seeds.begin(), sub.seeds.end());
  sub.entities = sub.seeds;

  std::vector<EntityId> ring = sub.seeds;
  for (int h = 1; h <= hops; ++h) {
    std::vector<EntityId> next;
    for (EntityId u : ring) {
      for (TripleId t : kb.incident(u)) {
        const Triple& tr = kb.triple(t);
        const EntityId v = tr.subject == u ? tr.object : tr.subject;
        if (!in_set[index_of(v)]) {
          in_set[index_of(v)] = true;
          next.push_back(v);
        }
      }
    }
    if (sub.entities.size() + next.size() > node_budget) {
      for (EntityId v : next) in_set[index_of(v)] = false;
      sub.truncated = true;
      break;
    }
    std::sort(next.begin(), next.end());
    sub.entities.insert(sub.entities.end(), next.begin(), next.end());
    sub.radius = h;
    if (next.empty()) break;
    ring = std::move(next);
  }

  for (EntityId u : sub.entities) {
    for (TripleId t : kb.incident(u)) {
      const Triple& tr = kb.triple(t);
      // Each qualifying triple is visited from its subject.
      if (tr.subject == u && in_set[index_of(tr.object)]) sub.triples.push_back(t);
    }
  }
  std::sort(sub.triples.begin(), sub.triples.end());
  return sub;
}

// ---------------------------------------------------------------------------
// Synthetic tasks

SyntheticSpec parse_synthetic_spec(std::string_view text) {
  SyntheticSpec spec;
  std::set<std::string> seen;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    line = trim(line);
    if (line.empty() || line.front() == '#') return;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw DataError(where("synthetic spec", line_no) + "expected key=value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
      throw DataError(where("synthetic spec", line_no) + "value for '" + key + "' is not a nonnegative integer");
    }
    if (!seen.insert(key).second) throw DataError(where("synthetic spec", line_no) + "duplicate key '" + key + "'");
    if (key == "entities") spec.entities = v;
    else if (key == "relations") spec.relations = v;
    else if (key == "triples") spec.triples = v;
    else if (key == "hops") spec.hops = static_cast<int>(v);
    else if (key == "questions") spec.questions = v;
    else if (key == "dev_questions") spec.dev_questions = v;
    else if (key == "distractors") spec.distractors = v;
    else if (key == "max_answers") spec.max_answers = v;
    else if (key == "types") spec.types = v;
    else throw DataError(where("synthetic spec", line_no) + "unknown key '" + key + "'");
  });
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return parse_synthetic_spec(read_file(path));
}

std::string format_synthetic_spec(const SyntheticSpec& spec) {
  std::ostringstream os;
  os << "entities=" << spec.entities << "\nrelations=" << spec.relations << "\ntriples=" << spec.triples
     << "\nhops=" << spec.hops << "\nquestions=" << spec.questions << "\ndev_questions=" << spec.dev_questions
     << "\ndistractors=" << spec.distractors << "\nmax_answers=" << spec.max_answers
     << "\ntypes=" << spec.types << "\n";
  return os.str();
}

std::vector<EntityId> follow_path(const KnowledgeBase& kb, EntityId seed, std::span<const RelationId> path) {
  std::vector<EntityId> frontier{seed};
  for (RelationId r : path) {
    std::set<EntityId> next;
    for (EntityId u : frontier) {
      for (TripleId t : kb.incident(u)) {
        const Triple& tr = kb.triple(t);
        if (tr.relation != r) continue;
        if (tr.subject == u) next.insert(tr.object);
        if (tr.object == u) next.insert(tr.subject);
      }
    }
    frontier.assign(next.begin(), next.end());
  }
  return frontier;
}

SyntheticTask generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.hops < 1) throw DataError("synthetic spec: hops must be >= 1");
  if (spec.types < 2) throw DataError("synthetic spec: types must be >= 2");
  if (spec.entities < spec.types) throw DataError("synthetic spec: fewer entities than types");
  if (spec.relations < spec.types) throw DataError("synthetic spec: need at least one relation per type");
  if (spec.dev_questions > spec.questions) throw DataError("synthetic spec: dev_questions exceeds questions");
  if (spec.max_answers < 1) throw DataError("synthetic spec: max_answers must be >= 1");

  Rng rng(seed);
  SyntheticTask task;
  KnowledgeBase& kb = task.kb;

  std::vector<std::vector<EntityId>> by_type(spec.types);
  for (std::size_t i = 0; i < spec.entities; ++i) {
    by_type[i % spec.types].push_back(kb.intern_entity("e" + std::to_string(i)));
  }
  auto entity_type = [&](EntityId e) { return index_of(e) % spec.types; };
  auto src_type = [&](RelationId r) { return index_of(r) % spec.types; };
  auto dst_type = [&](RelationId r) { return (index_of(r) + 1) % spec.types; };
  for (std::size_t r = 0; r < spec.relations; ++r) kb.intern_relation("r" + std::to_string(r));

  std::size_t capacity = 0;
  for (std::size_t r = 0; r < spec.relations; ++r) {
    const auto rid = make_id<RelationId>(r);
    capacity += by_type[src_type(rid)].size() * by_type[dst_type(rid)].size();
  }
  if (spec.triples > capacity) throw DataError("synthetic spec: more triples than type-consistent slots");

  const std::size_t max_attempts = 100 * spec.triples + 1000;
  for (std::size_t attempts = 0; kb.triple_count() < spec.triples; ++attempts) {
    if (attempts >= max_attempts) throw DataError("synthetic spec: could not place the requested triples");
    const auto r = make_id<RelationId>(rng.below(spec.relations));
    const auto& subjects = by_type[src_type(r)];
    const auto& objects = by_type[dst_type(r)];
    kb.add_triple(subjects[rng.below(subjects.size())], r, objects[rng.below(objects.size())]);
  }

  // Relations usable as a step from an entity of a given type, in either direction.
  std::vector<std::vector<RelationId>> steps(spec.types);
  for (std::size_t r = 0; r < spec.relations; ++r) {
    const auto rid = make_id<RelationId>(r);
    steps[src_type(rid)].push_back(rid);
    steps[dst_type(rid)].push_back(rid);
  }
  auto next_type = [&](std::size_t t, RelationId r) { return src_type(r) == t ? dst_type(r) : src_type(r); };

  struct Candidate {
    EntityId seed;
    std::vector<RelationId> path;
  };
  std::vector<Candidate> candidates;
  for (std::size_t e = 0; e < spec.entities; ++e) {
    const auto seed_id = make_id<EntityId>(e);
    std::vector<std::pair<std::vector<RelationId>, std::size_t>> partial{{{}, entity_type(seed_id)}};
    for (int h = 0; h < spec.hops; ++h) {
      std::vector<std::pair<std::vector<RelationId>, std::size_t>> grown;
      for (const auto& [path, type] : partial) {
        for (RelationId r : steps[type]) {
          if (!path.empty() && path.back() == r) continue;
          auto longer = path;
          longer.push_back(r);
          grown.emplace_back(std::move(longer), next_type(type, r));
        }
      }
      partial = std::move(grown);
    }
    for (auto& [path, _] : partial) candidates.push_back({seed_id, std::move(path)});
  }
  rng.shuffle(std::span<Candidate>(candidates));

  std::vector<std::string> lines;
  const std::size_t required_distractors = std::max<std::size_t>(1, spec.distractors);
  for (const auto& cand : candidates) {
    if (lines.size() == spec.questions) break;
    const auto gold = follow_path(kb, cand.seed, cand.path);
    if (gold.empty() || gold.size() > spec.max_answers) continue;
    if (std::binary_search(gold.begin(), gold.end(), cand.seed)) continue;

    std::size_t distractor_paths = 0;
    for (const auto& other : candidates) {
      if (other.seed != cand.seed || other.path == cand.path) continue;
      if (!follow_path(kb, cand.seed, other.path).empty()) ++distractor_paths;
      if (distractor_paths >= required_distractors) break;
    }
    if (distractor_paths < required_distractors) continue;

    std::string line = "what is";
    for (RelationId r : cand.path) line += " " + kb.relation_name(r);
    line += " of [" + kb.entity_name(cand.seed) + "]\t";
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (i) line += '|';
      line += kb.entity_name(gold[i]);
    }
    lines.push_back(std::move(line));
    task.paths.push_back(cand.path);
  }
  if (lines.size() < spec.questions) {
    throw DataError("synthetic spec: only " + std::to_string(lines.size()) + " of " +
                    std::to_string(spec.questions) + " questions are feasible");
  }

  const std::size_t train_count = spec.questions - spec.dev_questions;
  std::string train_text, dev_text;
  for (std::size_t i = 0; i < lines.size(); ++i) (i < train_count ? train_text : dev_text) += lines[i] + '\n';
  task.train = parse_qa(train_text, kb, spec.hops, "synthetic-train");
  task.dev = parse_qa(dev_text, kb, spec.hops, "synthetic-dev");
  return task;
}

}  // namespace rdas::kb
