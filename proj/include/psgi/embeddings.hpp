#pragma once

#include "psgi/domain.hpp"
#include "psgi/rng.hpp"

namespace psgi {

/// Attribute bits as +-1 in config attribute order, zero-padded to D, plus
/// N(0, sigma) per component. Each entity draws from its own stream so the
/// vector of one entity does not depend on which others are present.
inline std::vector<double> synth_embedding(const std::vector<std::string>& attributes,
                                           const std::map<std::string, bool>& bits, std::size_t dim,
                                           const EntityId& id, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw Error(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  std::vector<double> v(dim, 0.0);
  for (std::size_t i = 0; i < attributes.size() && i < dim; ++i) {
    auto it = bits.find(attributes[i]);
    v[i] = it != bits.end() && it->second ? 1.0 : -1.0;
  }
  if (sigma > 0.0) {
    Rng rng(derive_seed(seed, fnv1a64(id)));
    for (auto& c : v) c += sigma * rng.normal();
  }
  return v;
}

inline EmbeddingTable synth_embeddings(const DomainConfig& cfg, double sigma, std::uint64_t seed) {
  const auto dim = static_cast<std::size_t>(cfg.embedding_dim);
  EmbeddingTable t(dim);
  for (const auto& e : cfg.entities)
    t.insert(e.id, synth_embedding(cfg.attributes, e.attributes, dim, e.id, sigma, seed));
  return t;
}

/// `count` synthetic entities, each copying the attribute bits of a seen
/// entity (round-robin over a seeded shuffle), with fresh noise. Adds them
/// to `emb` and their truth to `truth`; returns their ids.
inline std::vector<EntityId> synth_holdout(const DomainConfig& cfg, const std::vector<EntityId>& seen,
                                           std::size_t count, double sigma, std::uint64_t seed, EmbeddingTable& emb,
                                           AttributeTruth& truth) {
  if (seen.empty()) throw Error(ErrorCode::TooFewEntities, "holdout needs at least one seen entity");
  std::vector<EntityId> order = seen;
  Rng rng(derive_seed(seed, 0x401d));
  rng.shuffle(order);
  std::vector<EntityId> out;
  for (std::size_t i = 0; i < count; ++i) {
    const EntitySpec* src = cfg.find_entity(order[i % order.size()]);
    if (!src) throw Error(ErrorCode::MissingEntity, order[i % order.size()]);
    EntityId id = "holdout_" + std::to_string(i);
    emb.insert(id, synth_embedding(cfg.attributes, src->attributes, emb.dim(), id, sigma, seed));
    for (const auto& a : cfg.attributes) {
      auto it = src->attributes.find(a);
      truth[a][id] = it != src->attributes.end() && it->second;
    }
    out.push_back(std::move(id));
  }
  return out;
}

}  // namespace psgi
