#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ecp {

struct EmbeddingVector {
  std::string id;
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

enum class FieldMetric { projection, cosine, l1, l2, none };

std::string_view to_string(FieldMetric metric) noexcept;
FieldMetric parse_field_metric(std::string_view text);

struct DemoEntry {
  EmbeddingVector vector;
  std::string payload;

  friend bool operator==(const DemoEntry&, const DemoEntry&) = default;
};

/// Candidate demonstrations with unique ids and a single shared dimension.
class DemoPool {
 public:
  DemoPool() = default;

  /// Throws DuplicateId on a repeated id, InvalidInput on a dimension mismatch or non-finite value.
  void add(EmbeddingVector vector, std::string payload = {});

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  /// 0 while the pool is empty.
  std::size_t dim() const noexcept { return dim_; }

  const std::vector<DemoEntry>& entries() const noexcept { return entries_; }
  const DemoEntry* find(std::string_view id) const;
  const EmbeddingVector& at(std::string_view id) const;

  friend bool operator==(const DemoPool& a, const DemoPool& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<DemoEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t dim_ = 0;
};

/// Total semantic field a set of demonstrations exerts on a query.
///
/// projection: sum of (q . s_i) / |q|
/// cosine:     sum of (q . s_i) / (|q| |s_i|)
/// l1, l2:     negated sum of distances, so larger still means a stronger field
/// none:       number of demonstrations
double field_strength(const EmbeddingVector& query, std::span<const EmbeddingVector> demos,
                      FieldMetric metric);

/// Signed projection of one demonstration onto the query direction.
double projection(const EmbeddingVector& query, const EmbeddingVector& demo);

/// EMF induced by a field of strength `phi`: lambda * phi.
double itl_emf(double lambda, double phi);

/// Linear field decay -lambda * phi0 * t. Informational only.
double decay_profile(double phi0, double lambda, double t);

struct RetrievalPolicy {
  enum class Tag { random, top_k, bottom_k, diverse_static, similar_dynamic, diverse_among_top };

  Tag tag = Tag::top_k;
  std::uint64_t seed = 0;  // random only
  std::size_t m = 0;       // diverse_among_top only

  static RetrievalPolicy random(std::uint64_t seed) { return {Tag::random, seed, 0}; }
  static RetrievalPolicy top_k() { return {Tag::top_k, 0, 0}; }
  static RetrievalPolicy bottom_k() { return {Tag::bottom_k, 0, 0}; }
  static RetrievalPolicy diverse_static() { return {Tag::diverse_static, 0, 0}; }
  static RetrievalPolicy similar_dynamic() { return {Tag::similar_dynamic, 0, 0}; }
  static RetrievalPolicy diverse_among_top(std::size_t m) { return {Tag::diverse_among_top, 0, m}; }
};

std::string_view to_string(RetrievalPolicy::Tag tag) noexcept;
RetrievalPolicy::Tag parse_policy_tag(std::string_view text);

/// Selects `k` demonstration ids from `pool` for `query`.
///
/// Ties in projection order break by ascending id. `diverse_static` ignores the query:
/// it seeds with the entry farthest from the pool centroid and then adds the entry whose
/// nearest selected neighbour is farthest (Euclidean). `diverse_among_top` runs the same
/// greedy max-min selection over the top-m entries, seeded with the most aligned one.
std::vector<std::string> retrieve(const EmbeddingVector& query, const DemoPool& pool,
                                  const RetrievalPolicy& policy, std::size_t k);

}  // namespace ecp
