#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fskd/errors.hpp"
#include "fskd/rng.hpp"

namespace fskd {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

enum class TokenClass { Special, Content, Function };

inline const char* token_class_name(TokenClass c) {
  switch (c) {
    case TokenClass::Special: return "SPECIAL";
    case TokenClass::Content: return "CONTENT";
    default: return "FUNCTION";
  }
}

// Synthetic vocabulary: 4 special ids, then a seeded partition of the rest
// into CONTENT (domain-bearing) and FUNCTION (shared) classes.
struct Vocab {
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kPad = 2;
  static constexpr int kSep = 3;
  static constexpr int kSpecials = 4;

  int size = 0;
  std::vector<std::string> tokens;
  std::vector<TokenClass> classes;
  std::vector<int> content_ids;   // shuffled assignment order
  std::vector<int> function_ids;

  TokenClass class_of(int id) const { return classes[static_cast<size_t>(id)]; }

  int speaker(int k) const {
    const int pool = std::max(1, std::min(4, static_cast<int>(function_ids.size())));
    return function_ids[static_cast<size_t>(k % pool)];
  }
  int query_marker() const {
    return function_ids[static_cast<size_t>(4 % function_ids.size())];
  }
  int connective(int domain) const {
    return function_ids[static_cast<size_t>((5 + domain) % static_cast<int>(function_ids.size()))];
  }

  // contiguous slice of content_ids owned by one domain (4 slices)
  std::pair<int, int> content_slice(int domain) const {
    const int n = static_cast<int>(content_ids.size());
    const int width = n / 4;
    const int lo = domain * width;
    return {lo, domain == 3 ? n : lo + width};
  }
};

inline Vocab build_vocab(int vocab_size, uint64_t seed, double content_ratio = 0.7) {
  if (vocab_size < 16)
    throw ConfigError("vocab size " + std::to_string(vocab_size) +
                      " too small to host specials plus both token classes (need >= 16)");
  Vocab v;
  v.size = vocab_size;
  v.tokens.resize(static_cast<size_t>(vocab_size));
  v.classes.assign(static_cast<size_t>(vocab_size), TokenClass::Special);
  v.tokens[0] = "<bos>";
  v.tokens[1] = "<eos>";
  v.tokens[2] = "<pad>";
  v.tokens[3] = "<sep>";

  const int rest = vocab_size - Vocab::kSpecials;
  const int n_content = static_cast<int>(std::llround(content_ratio * rest));
  if (n_content < 1 || rest - n_content < 1)
    throw ConfigError("vocab size " + std::to_string(vocab_size) +
                      " leaves an empty token class at content ratio " + std::to_string(content_ratio));

  std::vector<int> ids;
  for (int i = Vocab::kSpecials; i < vocab_size; ++i) ids.push_back(i);
  Rng rng(derive_seed(seed, "vocab"));
  rng.shuffle(ids);
  for (int i = 0; i < rest; ++i) {
    const int id = ids[static_cast<size_t>(i)];
    if (i < n_content) {
      v.classes[static_cast<size_t>(id)] = TokenClass::Content;
      v.tokens[static_cast<size_t>(id)] = "c" + std::to_string(v.content_ids.size());
      v.content_ids.push_back(id);
    } else {
      v.classes[static_cast<size_t>(id)] = TokenClass::Function;
      v.tokens[static_cast<size_t>(id)] = "f" + std::to_string(v.function_ids.size());
      v.function_ids.push_back(id);
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Domains and instances
// ---------------------------------------------------------------------------

struct DomainSpec {
  int domain_id = 0;
  std::string name;
  int turns_min = 5, turns_max = 8;
  int turn_len_min = 4, turn_len_max = 7;
  int summary_cap = 16;
  double content_mix = 0.55;  // share of CONTENT among turn body tokens
  double skew = 0.9;          // 0: shared CONTENT pool, 1: own slice only
  int query_keywords = 2;
};

inline const char* domain_name(int d) {
  switch (d) {
    case 0: return "academic";
    case 1: return "committee";
    case 2: return "product";
    default: return "chat";
  }
}

// Length profiles echo the relative shape of the three meeting domains plus
// a short-dialogue fourth domain at roughly 1/8 of the product transcript.
inline DomainSpec default_domain_spec(int domain, double skew) {
  DomainSpec s;
  s.domain_id = domain;
  s.name = domain_name(domain);
  s.skew = skew;
  switch (domain) {
    case 0: s.turns_min = 5; s.turns_max = 8; break;
    case 1: s.turns_min = 3; s.turns_max = 5; break;
    case 2: s.turns_min = 6; s.turns_max = 10; break;
    default:
      s.turns_min = 2; s.turns_max = 3;
      s.turn_len_min = 1; s.turn_len_max = 2;
      s.summary_cap = 8;
      break;
  }
  return s;
}

// One training example; `classes` labels each summary token.
struct Instance {
  int domain = 0;
  std::vector<int> query;
  std::vector<int> transcript;
  std::vector<int> summary;
  std::vector<TokenClass> classes;
};

namespace detail {

inline int draw_content(const Vocab& v, const DomainSpec& spec, Rng& rng) {
  const auto [lo, hi] = v.content_slice(spec.domain_id);
  if (rng.uniform() < spec.skew)
    return v.content_ids[static_cast<size_t>(lo + rng.uniform_int(hi - lo))];
  return v.content_ids[static_cast<size_t>(rng.uniform_int(static_cast<int>(v.content_ids.size())))];
}

inline int draw_function(const Vocab& v, Rng& rng) {
  return v.function_ids[static_cast<size_t>(rng.uniform_int(static_cast<int>(v.function_ids.size())))];
}

}  // namespace detail

// Transcript = speaker-led turns of CONTENT/FUNCTION tokens; query = marker +
// keywords present in the transcript; summary = the deterministic extraction
// rule: CONTENT tokens of keyword-bearing turns in transcript order, each
// matching turn introduced by the domain's connective token.
inline Instance generate_instance(const Vocab& vocab, const DomainSpec& spec, int max_src_len,
                                  Rng& rng) {
  Instance inst;
  inst.domain = spec.domain_id;

  const int turns = rng.uniform_int(spec.turns_min, spec.turns_max);
  std::vector<std::pair<int, int>> spans;
  for (int t = 0; t < turns; ++t) {
    const int start = static_cast<int>(inst.transcript.size());
    inst.transcript.push_back(vocab.speaker(rng.uniform_int(4)));
    const int len = rng.uniform_int(spec.turn_len_min, spec.turn_len_max);
    for (int i = 0; i < len; ++i) {
      if (rng.uniform() < spec.content_mix)
        inst.transcript.push_back(detail::draw_content(vocab, spec, rng));
      else
        inst.transcript.push_back(detail::draw_function(vocab, rng));
    }
    spans.emplace_back(start, static_cast<int>(inst.transcript.size()));
  }
  // the query needs at least one CONTENT token to point at
  bool any_content = false;
  for (int id : inst.transcript) any_content |= vocab.class_of(id) == TokenClass::Content;
  if (!any_content) inst.transcript[1] = detail::draw_content(vocab, spec, rng);

  // truncate the transcript before extraction so the summary stays a function
  // of what the model actually sees
  const int budget = max_src_len - (1 + spec.query_keywords + 1);
  if (static_cast<int>(inst.transcript.size()) > budget) {
    inst.transcript.resize(static_cast<size_t>(budget));
    for (auto& [s, e] : spans) {
      s = std::min(s, budget);
      e = std::min(e, budget);
    }
  }

  std::vector<int> distinct;
  for (int id : inst.transcript)
    if (vocab.class_of(id) == TokenClass::Content &&
        std::find(distinct.begin(), distinct.end(), id) == distinct.end())
      distinct.push_back(id);

  inst.query.push_back(vocab.query_marker());
  const int k = std::min<int>(spec.query_keywords, static_cast<int>(distinct.size()));
  std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(distinct.size()), k);
  std::vector<int> keywords;
  for (int p : picks) {
    keywords.push_back(distinct[static_cast<size_t>(p)]);
    inst.query.push_back(distinct[static_cast<size_t>(p)]);
  }

  const int connective = vocab.connective(spec.domain_id);
  for (const auto& [s, e] : spans) {
    bool match = false;
    for (int i = s; i < e && !match; ++i)
      match = std::find(keywords.begin(), keywords.end(), inst.transcript[static_cast<size_t>(i)]) != keywords.end();
    if (!match) continue;
    if (static_cast<int>(inst.summary.size()) >= spec.summary_cap) break;
    inst.summary.push_back(connective);
    inst.classes.push_back(TokenClass::Function);
    for (int i = s; i < e; ++i) {
      if (static_cast<int>(inst.summary.size()) >= spec.summary_cap) break;
      const int id = inst.transcript[static_cast<size_t>(i)];
      if (vocab.class_of(id) == TokenClass::Content) {
        inst.summary.push_back(id);
        inst.classes.push_back(TokenClass::Content);
      }
    }
  }
  return inst;
}

// Source sequence fed to the encoder: query ++ <sep> ++ transcript.
inline std::vector<int> source_ids(const Instance& inst) {
  std::vector<int> src = inst.query;
  src.push_back(Vocab::kSep);
  src.insert(src.end(), inst.transcript.begin(), inst.transcript.end());
  return src;
}

// ---------------------------------------------------------------------------
// Experimental settings
// ---------------------------------------------------------------------------

struct ClientDataset {
  int client_id = 0;
  std::string name;
  std::string domain;  // "mixed" under the IID setting
  std::vector<Instance> train, valid, test;
};

struct Setting {
  std::string preset;
  Vocab vocab;
  std::vector<ClientDataset> clients;
};

struct CorpusConfig {
  int vocab_size = 96;
  double content_ratio = 0.7;
  int max_src_len = 96;
  double skew = 0.9;
  double split_scale = 1.0;
  int query_keywords = 2;
};

namespace detail {

struct SplitSizes {
  int train, valid, test;
};

inline SplitSizes scaled(double scale, int tr, int va, int te) {
  auto f = [scale](int n) { return std::max(1, static_cast<int>(std::llround(scale * n))); };
  return {f(tr), f(va), f(te)};
}

// Per-domain base counts used by the unbalanced settings (meeting-domain
// corpus ratios); the fourth domain is a large pool of short dialogues.
inline SplitSizes domain_base_sizes(int domain) {
  switch (domain) {
    case 0: return {218, 45, 49};
    case 1: return {284, 67, 66};
    case 2: return {593, 125, 129};
    default: return {1200, 80, 80};
  }
}

inline std::vector<Instance> gen_split(const Vocab& vocab, const DomainSpec& spec, int count,
                                       int max_src_len, uint64_t stream_seed) {
  Rng rng(stream_seed);
  std::vector<Instance> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_instance(vocab, spec, max_src_len, rng));
  return out;
}

}  // namespace detail

inline std::vector<std::string> known_presets() {
  return {"noniid_unbalanced", "iid_balanced", "noniid_balanced", "extreme_fourth"};
}

// Builds the per-client datasets for one named experimental setting. Client
// datasets depend only on (seed, vocab, domain, split), so adding the fourth
// client leaves the original three clients' data untouched.
inline Setting make_setting(const std::string& preset, const CorpusConfig& cfg, uint64_t seed) {
  Setting setting;
  setting.preset = preset;
  setting.vocab = build_vocab(cfg.vocab_size, seed, cfg.content_ratio);

  auto domain_split = [&](int domain, int split, int count) {
    DomainSpec spec = default_domain_spec(domain, cfg.skew);
    spec.query_keywords = cfg.query_keywords;
    return detail::gen_split(setting.vocab, spec, count, cfg.max_src_len,
                             derive_seed(seed, "datagen", static_cast<uint64_t>(domain),
                                         static_cast<uint64_t>(split)));
  };

  auto one_domain_client = [&](int client_id, int domain, detail::SplitSizes n) {
    ClientDataset c;
    c.client_id = client_id;
    c.name = "client" + std::to_string(client_id);
    c.domain = domain_name(domain);
    c.train = domain_split(domain, 0, n.train);
    c.valid = domain_split(domain, 1, n.valid);
    c.test = domain_split(domain, 2, n.test);
    return c;
  };

  if (preset == "noniid_unbalanced" || preset == "extreme_fourth") {
    const int n_clients = preset == "extreme_fourth" ? 4 : 3;
    for (int d = 0; d < n_clients; ++d) {
      auto base = detail::domain_base_sizes(d);
      setting.clients.push_back(one_domain_client(
          d, d, detail::scaled(cfg.split_scale, base.train, base.valid, base.test)));
    }
  } else if (preset == "noniid_balanced") {
    for (int d = 0; d < 3; ++d)
      setting.clients.push_back(one_domain_client(
          d, d, detail::scaled(cfg.split_scale, 200, 40, 40)));
  } else if (preset == "iid_balanced") {
    // each domain's pool is shuffled and dealt a third to every client
    for (int c = 0; c < 3; ++c) {
      ClientDataset cd;
      cd.client_id = c;
      cd.name = "client" + std::to_string(c);
      cd.domain = "mixed";
      setting.clients.push_back(std::move(cd));
    }
    for (int d = 0; d < 3; ++d) {
      auto base = detail::domain_base_sizes(d);
      auto sizes = detail::scaled(cfg.split_scale, base.train, base.valid, base.test);
      for (int split = 0; split < 3; ++split) {
        const int count = split == 0 ? sizes.train : split == 1 ? sizes.valid : sizes.test;
        std::vector<Instance> pool = domain_split(d, split, count);
        std::vector<int> order(pool.size());
        for (size_t i = 0; i < pool.size(); ++i) order[i] = static_cast<int>(i);
        Rng deal(derive_seed(seed, "iid_split", static_cast<uint64_t>(d), static_cast<uint64_t>(split)));
        deal.shuffle(order);
        for (size_t i = 0; i < order.size(); ++i) {
          auto& client = setting.clients[i % 3];
          auto& dst = split == 0 ? client.train : split == 1 ? client.valid : client.test;
          dst.push_back(pool[static_cast<size_t>(order[i])]);
        }
      }
    }
  } else {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  return setting;
}

// Pooled generic corpus for backbone training: skew 0, all domain length
// profiles, never drawn from any client's stream.
inline std::vector<Instance> make_pretrain_pool(const Vocab& vocab, int count, int max_src_len,
                                                int query_keywords, uint64_t seed) {
  if (count <= 0) return {};
  Rng rng(derive_seed(seed, "pretrain_pool"));
  std::vector<Instance> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    DomainSpec spec = default_domain_spec(i % 4, /*skew=*/0.0);
    spec.query_keywords = query_keywords;
    out.push_back(generate_instance(vocab, spec, max_src_len, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Line-delimited export
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json instance_to_json(const Instance& inst) {
  nlohmann::ordered_json j;
  j["domain"] = inst.domain;
  j["query"] = inst.query;
  j["transcript"] = inst.transcript;
  j["summary"] = inst.summary;
  std::vector<std::string> classes;
  classes.reserve(inst.classes.size());
  for (TokenClass c : inst.classes) classes.emplace_back(token_class_name(c));
  j["classes"] = classes;
  return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  inst.domain = j.at("domain").get<int>();
  inst.query = j.at("query").get<std::vector<int>>();
  inst.transcript = j.at("transcript").get<std::vector<int>>();
  inst.summary = j.at("summary").get<std::vector<int>>();
  for (const auto& name : j.at("classes")) {
    const std::string s = name.get<std::string>();
    inst.classes.push_back(s == "CONTENT" ? TokenClass::Content
                                          : s == "FUNCTION" ? TokenClass::Function
                                                            : TokenClass::Special);
  }
  return inst;
}

}  // namespace fskd
