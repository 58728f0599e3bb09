#include "ecp/semantic_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ecp/error.hpp"
#include "ecp/random.hpp"

namespace ecp {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double l1_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void check_dims(const EmbeddingVector& query, const EmbeddingVector& demo) {
  if (query.dim() != demo.dim()) {
    fail(ErrorKind::InvalidInput, "dimension mismatch between query '" + query.id + "' (" +
                                      std::to_string(query.dim()) + ") and '" + demo.id + "' (" +
                                      std::to_string(demo.dim()) + ")");
  }
}

double nonzero_query_norm(const EmbeddingVector& query) {
  const double n = norm(query.values);
  if (!(n > 0.0)) fail(ErrorKind::InvalidInput, "query '" + query.id + "' has zero norm");
  return n;
}

struct Scored {
  std::size_t index;
  double score;
};

/// Pool indices ordered by projection; descending unless `ascending`, ties by id.
std::vector<Scored> ranked_by_projection(const EmbeddingVector& query, const DemoPool& pool, bool ascending) {
  const double qn = nonzero_query_norm(query);
  const auto& entries = pool.entries();
  std::vector<Scored> scored;
  scored.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    check_dims(query, entries[i].vector);
    scored.push_back({i, dot(query.values, entries[i].vector.values) / qn});
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return ascending ? a.score < b.score : a.score > b.score;
    return entries[a.index].vector.id < entries[b.index].vector.id;
  });
  return scored;
}

/// Greedy max-min (farthest point) selection of k items from `candidates`, starting at `first`.
std::vector<std::size_t> farthest_point(const DemoPool& pool, std::vector<std::size_t> candidates,
                                        std::size_t first, std::size_t k) {
  const auto& entries = pool.entries();
  const auto id_of = [&](std::size_t i) -> const std::string& { return entries[i].vector.id; };

  std::vector<std::size_t> selected{first};
  std::erase(candidates, first);
  std::vector<double> nearest(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    nearest[c] = l2_distance(entries[candidates[c]].vector.values, entries[first].vector.values);
  }
  while (selected.size() < k) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < candidates.size(); ++c) {
      if (nearest[c] > nearest[best] ||
          (nearest[c] == nearest[best] && id_of(candidates[c]) < id_of(candidates[best]))) {
        best = c;
      }
    }
    const std::size_t chosen = candidates[best];
    selected.push_back(chosen);
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(best));
    nearest.erase(nearest.begin() + static_cast<std::ptrdiff_t>(best));
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      nearest[c] = std::min(nearest[c], l2_distance(entries[candidates[c]].vector.values,
                                                    entries[chosen].vector.values));
    }
  }
  return selected;
}

std::size_t farthest_from_centroid(const DemoPool& pool, const std::vector<std::size_t>& candidates) {
  const auto& entries = pool.entries();
  std::vector<double> centroid(pool.dim(), 0.0);
  for (std::size_t i : candidates) {
    for (std::size_t d = 0; d < centroid.size(); ++d) centroid[d] += entries[i].vector.values[d];
  }
  for (double& c : centroid) c /= static_cast<double>(candidates.size());

  std::size_t best = candidates.front();
  double best_distance = -1.0;
  for (std::size_t i : candidates) {
    const double d = l2_distance(entries[i].vector.values, centroid);
    if (d > best_distance || (d == best_distance && entries[i].vector.id < entries[best].vector.id)) {
      best = i;
      best_distance = d;
    }
  }
  return best;
}

}  // namespace

std::string_view to_string(FieldMetric metric) noexcept {
  switch (metric) {
    case FieldMetric::projection: return "projection";
    case FieldMetric::cosine: return "cosine";
    case FieldMetric::l1: return "l1";
    case FieldMetric::l2: return "l2";
    case FieldMetric::none: return "none";
  }
  return "projection";
}

FieldMetric parse_field_metric(std::string_view text) {
  for (auto m : {FieldMetric::projection, FieldMetric::cosine, FieldMetric::l1, FieldMetric::l2,
                 FieldMetric::none}) {
    if (text == to_string(m)) return m;
  }
  fail(ErrorKind::InvalidInput, "unknown field metric '" + std::string(text) + "'");
}

void DemoPool::add(EmbeddingVector vector, std::string payload) {
  if (vector.values.empty()) fail(ErrorKind::InvalidInput, "embedding '" + vector.id + "' is empty");
  if (!entries_.empty() && vector.dim() != dim_) {
    fail(ErrorKind::InvalidInput, "embedding '" + vector.id + "' has dimension " +
                                      std::to_string(vector.dim()) + ", pool has " + std::to_string(dim_));
  }
  for (double v : vector.values) {
    if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "embedding '" + vector.id + "' has a non-finite value");
  }
  if (index_.contains(vector.id)) fail(ErrorKind::DuplicateId, "embedding id '" + vector.id + "'");
  dim_ = vector.dim();
  index_.emplace(vector.id, entries_.size());
  entries_.push_back({std::move(vector), std::move(payload)});
}

const DemoEntry* DemoPool::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const EmbeddingVector& DemoPool::at(std::string_view id) const {
  const auto* entry = find(id);
  if (entry == nullptr) fail(ErrorKind::MissingEmbedding, "no embedding with id '" + std::string(id) + "'");
  return entry->vector;
}

double projection(const EmbeddingVector& query, const EmbeddingVector& demo) {
  check_dims(query, demo);
  return dot(query.values, demo.values) / nonzero_query_norm(query);
}

double field_strength(const EmbeddingVector& query, std::span<const EmbeddingVector> demos,
                      FieldMetric metric) {
  if (demos.empty()) return 0.0;
  for (const auto& d : demos) check_dims(query, d);

  double phi = 0.0;
  switch (metric) {
    case FieldMetric::projection: {
      const double qn = nonzero_query_norm(query);
      for (const auto& d : demos) phi += dot(query.values, d.values) / qn;
      break;
    }
    case FieldMetric::cosine: {
      const double qn = nonzero_query_norm(query);
      for (const auto& d : demos) {
        const double dn = norm(d.values);
        if (!(dn > 0.0)) fail(ErrorKind::InvalidInput, "demo '" + d.id + "' has zero norm");
        phi += dot(query.values, d.values) / (qn * dn);
      }
      break;
    }
    case FieldMetric::l1:
      for (const auto& d : demos) phi -= l1_distance(query.values, d.values);
      break;
    case FieldMetric::l2:
      for (const auto& d : demos) phi -= l2_distance(query.values, d.values);
      break;
    case FieldMetric::none:
      phi = static_cast<double>(demos.size());
      break;
  }
  return phi;
}

double itl_emf(double lambda, double phi) {
  if (!(std::isfinite(lambda) && lambda > 0.0)) fail(ErrorKind::InvalidInput, "lambda must be > 0");
  return lambda * phi;
}

double decay_profile(double phi0, double lambda, double t) { return -lambda * phi0 * t; }

std::string_view to_string(RetrievalPolicy::Tag tag) noexcept {
  using Tag = RetrievalPolicy::Tag;
  switch (tag) {
    case Tag::random: return "random";
    case Tag::top_k: return "top_k";
    case Tag::bottom_k: return "bottom_k";
    case Tag::diverse_static: return "diverse_static";
    case Tag::similar_dynamic: return "similar_dynamic";
    case Tag::diverse_among_top: return "diverse_among_top";
  }
  return "top_k";
}

RetrievalPolicy::Tag parse_policy_tag(std::string_view text) {
  using Tag = RetrievalPolicy::Tag;
  for (auto t : {Tag::random, Tag::top_k, Tag::bottom_k, Tag::diverse_static, Tag::similar_dynamic,
                 Tag::diverse_among_top}) {
    if (text == to_string(t)) return t;
  }
  fail(ErrorKind::InvalidInput, "unknown retrieval policy '" + std::string(text) + "'");
}

std::vector<std::string> retrieve(const EmbeddingVector& query, const DemoPool& pool,
                                  const RetrievalPolicy& policy, std::size_t k) {
  using Tag = RetrievalPolicy::Tag;
  if (k == 0) fail(ErrorKind::InvalidInput, "k must be >= 1");
  if (pool.empty()) fail(ErrorKind::InvalidInput, "cannot retrieve from an empty pool");
  if (k > pool.size()) {
    fail(ErrorKind::InvalidInput,
         "k = " + std::to_string(k) + " exceeds pool size " + std::to_string(pool.size()));
  }
  if (policy.tag == Tag::diverse_among_top && policy.m < k) {
    fail(ErrorKind::InvalidInput, "diverse_among_top needs m >= k");
  }

  const auto& entries = pool.entries();
  std::vector<std::size_t> picked;
  switch (policy.tag) {
    case Tag::top_k:
    case Tag::similar_dynamic:
    case Tag::bottom_k: {
      const auto ranked = ranked_by_projection(query, pool, policy.tag == Tag::bottom_k);
      for (std::size_t i = 0; i < k; ++i) picked.push_back(ranked[i].index);
      break;
    }
    case Tag::random: {
      std::vector<std::size_t> order(entries.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(policy.seed);
      for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + uniform_index(rng, order.size() - i);
        std::swap(order[i], order[j]);
      }
      picked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    }
    case Tag::diverse_static: {
      std::vector<std::size_t> all(entries.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      const std::size_t first = farthest_from_centroid(pool, all);
      picked = farthest_point(pool, std::move(all), first, k);
      break;
    }
    case Tag::diverse_among_top: {
      const auto ranked = ranked_by_projection(query, pool, false);
      const std::size_t m = std::min(policy.m, ranked.size());
      std::vector<std::size_t> top;
      for (std::size_t i = 0; i < m; ++i) top.push_back(ranked[i].index);
      const std::size_t first = top.front();
      picked = farthest_point(pool, std::move(top), first, k);
      break;
    }
  }

  std::vector<std::string> ids;
  ids.reserve(picked.size());
  for (std::size_t i : picked) ids.push_back(entries[i].vector.id);
  return ids;
}

}  // namespace ecp
