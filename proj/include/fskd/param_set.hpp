#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <string>

#include "fskd/tensor.hpp"

namespace fskd {

// Named collection of weight tensors; the unit of client-server exchange.
// std::map keeps iteration order deterministic.
using ParamSet = std::map<std::string, Tensor>;

inline ParamSet clone_params(const ParamSet& ps, bool requires_grad) {
  ParamSet out;
  for (const auto& [name, t] : ps) {
    Tensor c = detach(t);
    c->requires_grad = requires_grad;
    if (requires_grad) c->g.assign(c->v.size(), 0.0);
    out.emplace(name, std::move(c));
  }
  return out;
}

inline size_t param_count(const ParamSet& ps) {
  size_t n = 0;
  for (const auto& [name, t] : ps) n += t->numel();
  return n;
}

// Throws naming the first differing tensor.
inline void check_same_structure(const ParamSet& a, const ParamSet& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end() && ib != b.end(); ++ia, ++ib) {
    if (ia->first != ib->first)
      throw ShapeError("param sets differ at tensor '" + std::min(ia->first, ib->first) + "'");
    if (ia->second->shape != ib->second->shape)
      throw ShapeError("param sets differ at tensor '" + ia->first + "': " +
                       shape_str(ia->second->shape) + " vs " + shape_str(ib->second->shape));
  }
  if (ia != a.end()) throw ShapeError("param sets differ at tensor '" + ia->first + "'");
  if (ib != b.end()) throw ShapeError("param sets differ at tensor '" + ib->first + "'");
}

inline bool params_bit_equal(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second->shape != ib->second->shape) return false;
    const auto& va = ia->second->v;
    const auto& vb = ib->second->v;
    for (size_t i = 0; i < va.size(); ++i) {
      uint64_t xa, xb;
      static_assert(sizeof(double) == sizeof(uint64_t));
      std::memcpy(&xa, &va[i], 8);
      std::memcpy(&xb, &vb[i], 8);
      if (xa != xb) return false;
    }
  }
  return true;
}

// FNV-1a over the raw value bytes, for round-ledger checksums.
inline uint64_t params_checksum(const ParamSet& ps) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : ps) {
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    for (double x : t->v) {
      uint64_t bits;
      std::memcpy(&bits, &x, 8);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffULL;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace fskd
