#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rdas/ids.hpp"

namespace rdas::kb {

struct Triple {
  EntityId subject;
  RelationId relation;
  EntityId object;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Entity/relation vocabularies plus deduplicated triples with an incidence
/// index. Ids are assigned in first-appearance order.
class KnowledgeBase {
 public:
  EntityId intern_entity(std::string_view surface);
  RelationId intern_relation(std::string_view surface);
  /// Returns false if the exact triple is already present.
  bool add_triple(EntityId subject, RelationId relation, EntityId object);
  bool add_triple(std::string_view subject, std::string_view relation, std::string_view object);

  std::optional<EntityId> find_entity(std::string_view surface) const;
  std::optional<RelationId> find_relation(std::string_view surface) const;

  const std::string& entity_name(EntityId id) const { return entities_.at(index_of(id)); }
  const std::string& relation_name(RelationId id) const { return relations_.at(index_of(id)); }
  const Triple& triple(TripleId id) const { return triples_.at(index_of(id)); }

  std::span<const std::string> entities() const noexcept { return entities_; }
  std::span<const std::string> relations() const noexcept { return relations_; }
  std::span<const Triple> triples() const noexcept { return triples_; }
  /// Triples mentioning `id` as subject or object, in insertion order.
  std::span<const TripleId> incident(EntityId id) const { return incidence_.at(index_of(id)); }

  std::size_t entity_count() const noexcept { return entities_.size(); }
  std::size_t relation_count() const noexcept { return relations_.size(); }
  std::size_t triple_count() const noexcept { return triples_.size(); }

 private:
  struct TripleHash {
    std::size_t operator()(const std::array<std::uint32_t, 3>& t) const noexcept;
  };

  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<Triple> triples_;
  std::unordered_set<std::array<std::uint32_t, 3>, TripleHash> triple_set_;
  std::vector<std::vector<TripleId>> incidence_;
};

/// Parse `subject|relation|object` lines. Blank lines are skipped and exact
/// duplicates dropped. Throws DataError with the line number on malformed input.
KnowledgeBase load_kb(const std::filesystem::path& path);
KnowledgeBase parse_kb(std::string_view text, std::string_view source = "<memory>");
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);
std::string format_kb(const KnowledgeBase& kb);

// ---------------------------------------------------------------------------
// Text handling

/// Lowercase, split on whitespace, strip punctuation at token edges.
std::vector<std::string> tokenize(std::string_view text);
/// Tokens joined by single spaces; the key used for surface matching.
std::string normalize_surface(std::string_view text);

/// Token that replaces a bracketed seed mention in question text.
inline constexpr std::string_view kEntityPlaceholder = "__ent__";

/// Question tokens with bracketed mentions collapsed to kEntityPlaceholder.
std::vector<std::string> question_tokens(std::string_view question);

/// Surface-form entity linker. Bracketed spans are matched exactly first;
/// otherwise the longest case-insensitive token-span matches are taken
/// greedily (longest first, then leftmost), never overlapping.
class EntityLinker {
 public:
  explicit EntityLinker(const KnowledgeBase& kb);

  /// Throws UnlinkableQuestion when nothing matches.
  std::vector<EntityId> link(std::string_view question) const;

 private:
  const KnowledgeBase* kb_;
  std::unordered_map<std::string, std::vector<EntityId>> by_surface_;
  std::size_t max_tokens_ = 0;
};

std::vector<EntityId> link_entities(std::string_view question, const KnowledgeBase& kb);

// ---------------------------------------------------------------------------
// QA data

struct QAExample {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<EntityId> seeds;    // sorted, unique, nonempty
  std::vector<EntityId> answers;  // sorted, unique
  int hops = 0;
  std::size_t line = 0;
};

struct UnlinkedQuestion {
  std::string text;
  std::vector<EntityId> answers;
  std::size_t line = 0;
};

struct QASet {
  std::vector<QAExample> examples;
  std::vector<UnlinkedQuestion> unlinkable;

  std::size_t size() const noexcept { return examples.size() + unlinkable.size(); }
};

/// Parse `question<TAB>ans1|ans2|...` lines. Unknown answers, missing tabs
/// and empty answer lists throw DataError naming the line. Questions that
/// cannot be linked are collected in QASet::unlinkable.
QASet load_qa(const std::filesystem::path& path, const KnowledgeBase& kb, int hops = 0);
QASet parse_qa(std::string_view text, const KnowledgeBase& kb, int hops = 0,
               std::string_view source = "<memory>");
std::string format_qa(const QASet& set, const KnowledgeBase& kb);

// ---------------------------------------------------------------------------
// Subgraph extraction

struct Subgraph {
  std::vector<EntityId> entities;  // seeds first, then ring by ring
  std::vector<TripleId> triples;   // ascending
  std::vector<EntityId> seeds;
  bool truncated = false;
  int radius = 0;  // last fully included ring
};

/// Undirected ring-by-ring BFS from `seeds` up to `hops` rings, then every
/// triple with both endpoints collected. A ring that would push the entity
/// count past `node_budget` is not added and `truncated` is set.
Subgraph extract_subgraph(const KnowledgeBase& kb, std::span<const EntityId> seeds, int hops,
                          std::size_t node_budget = 500);

// ---------------------------------------------------------------------------
// Synthetic tasks

/// Parameters of a generated multi-hop task. Entities are split into `types`
/// classes arranged in a cycle; relation r maps class (r mod types) to the
/// next class, so relation paths have a consistent direction.
struct SyntheticSpec {
  std::size_t entities = 100;
  std::size_t relations = 8;
  std::size_t triples = 400;
  int hops = 1;
  std::size_t questions = 400;
  /// Held-out questions emitted as the dev split (0: none).
  std::size_t dev_questions = 0;
  /// Minimum number of wrong-relation-sequence paths from each seed.
  std::size_t distractors = 1;
  std::size_t max_answers = 4;
  std::size_t types = 4;
};

SyntheticSpec parse_synthetic_spec(std::string_view text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
std::string format_synthetic_spec(const SyntheticSpec& spec);

struct SyntheticTask {
  KnowledgeBase kb;
  QASet train;
  QASet dev;
  /// Relation path behind each question, train then dev order.
  std::vector<std::vector<RelationId>> paths;
};

/// Deterministic in (spec, seed). Throws DataError when the spec is infeasible.
SyntheticTask generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Entities reachable from `seed` by following `path` forward.
std::vector<EntityId> follow_path(const KnowledgeBase& kb, EntityId seed,
                                  std::span<const RelationId> path);

}  // namespace rdas::kb
