#include "kpa/native_runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <set>

#include "kpa/digest.hpp"
#include "kpa/error.hpp"
#include "kpa/rng.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

constexpr std::uint32_t kHashRows = 1u << 14;
constexpr std::uint32_t kDim = 32;
constexpr std::uint32_t kSoftRows = 64;
constexpr std::uint32_t kPositions = 32;
constexpr std::uint32_t kBuckets = 2048;
constexpr std::uint32_t kEos = 0;
constexpr std::uint32_t kBos = 1;
constexpr std::size_t kMaxTargetTokens = 64;
constexpr std::string_view kMagic = "KPANAT1\n";

using Vec = std::array<float, kDim>;

struct Weights {
  std::vector<float> E = std::vector<float>(std::size_t{kHashRows} * kDim);   // feature embeddings
  std::vector<float> S = std::vector<float>(std::size_t{kSoftRows} * kDim);   // soft tokens
  std::vector<float> W = std::vector<float>(std::size_t{kDim} * kDim);
  std::vector<float> w0 = std::vector<float>(kDim);
  std::vector<float> C = std::vector<float>(std::size_t{2} * kDim);           // pair head
  std::vector<float> c = std::vector<float>(2);
  std::vector<float> P = std::vector<float>(std::size_t{kPositions} * kDim);  // decoder positions
  std::vector<float> Q = std::vector<float>(std::size_t{kBuckets} * kDim);    // previous-token input
  std::vector<float> O = std::vector<float>(std::size_t{kBuckets} * kDim);    // output projection
  std::vector<float> ob = std::vector<float>(kBuckets);
  std::map<std::uint32_t, std::string> vocab;  // bucket -> surface token seen in training targets

  std::array<std::vector<float>*, 10> tensors() { return {&E, &S, &W, &w0, &C, &c, &P, &Q, &O, &ob}; }
  std::array<const std::vector<float>*, 10> tensors() const { return {&E, &S, &W, &w0, &C, &c, &P, &Q, &O, &ob}; }
};

std::uint32_t feature_row(std::string_view feature) { return static_cast<std::uint32_t>(fnv1a64(feature) % kHashRows); }

std::uint32_t token_bucket(std::string_view token) {
  return 3 + static_cast<std::uint32_t>(fnv1a64(token) % (kBuckets - 3));
}

std::uint32_t soft_row(std::string_view template_name, std::string_view share_key) {
  return static_cast<std::uint32_t>(fnv1a64(std::string(template_name) + "|" + std::string(share_key)) % kSoftRows);
}

struct Encoded {
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> soft;
};

std::vector<std::string> capped_tokens(std::string_view text, int max_len) {
  auto tokens = word_tokens(text);
  if (tokens.size() > static_cast<std::size_t>(max_len)) tokens.resize(static_cast<std::size_t>(max_len));
  return tokens;
}

void add_segment(Encoded& enc, std::string_view tag, const std::vector<std::string>& tokens) {
  const std::string prefix = std::string(tag) + "|";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    enc.rows.push_back(feature_row(prefix + tokens[i]));
    if (i + 1 < tokens.size()) enc.rows.push_back(feature_row(prefix + tokens[i] + "_" + tokens[i + 1]));
  }
}

void add_cross(Encoded& enc, const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::set<std::string> sb(b.begin(), b.end());
  std::set<std::string> seen;
  for (const auto& t : a) {
    if (sb.contains(t) && seen.insert(t).second) enc.rows.push_back(feature_row("x|" + t));
  }
  enc.rows.push_back(feature_row("overlap|" + std::to_string(std::min<std::size_t>(seen.size(), 8))));
}

Encoded encode_pair(std::string_view a, std::optional<std::string_view> b, int max_len) {
  Encoded enc;
  enc.rows.push_back(feature_row("bias"));
  const auto ta = capped_tokens(a, max_len);
  add_segment(enc, "a", ta);
  if (b) {
    const auto tb = capped_tokens(*b, max_len);
    add_segment(enc, "b", tb);
    add_cross(enc, ta, tb);
  }
  return enc;
}

Encoded encode_prompt(const PromptInstance& instance, int max_len) {
  Encoded enc;
  enc.rows.push_back(feature_row("bias"));
  add_segment(enc, "p", capped_tokens(strip_mask(instance.rendered_text, instance.mask_marker), max_len));
  auto first = instance.bindings.find(SlotId::X1);
  if (first == instance.bindings.end()) first = instance.bindings.find(SlotId::X);
  const auto second = instance.bindings.find(SlotId::X2);
  if (first != instance.bindings.end() && second != instance.bindings.end()) {
    add_cross(enc, capped_tokens(first->second, max_len), capped_tokens(second->second, max_len));
  }
  for (const auto& pos : instance.soft_positions) enc.soft.push_back(soft_row(instance.template_name, pos.share_key));
  return enc;
}

Encoded encode_source(std::string_view source, std::string_view mask_marker, int max_len) {
  Encoded enc;
  enc.rows.push_back(feature_row("bias"));
  add_segment(enc, "s", capped_tokens(strip_mask(source, mask_marker), max_len));
  return enc;
}

std::vector<std::uint32_t> target_buckets(std::string_view text, bool with_eos) {
  std::vector<std::uint32_t> out;
  for (const auto& t : surface_tokens(text)) {
    if (out.size() == kMaxTargetTokens) break;
    out.push_back(token_bucket(t));
  }
  if (with_eos) out.push_back(kEos);
  return out;
}

struct EncoderState {
  Vec h{};
  Vec z{};
};

EncoderState encode(const Weights& w, const Encoded& enc) {
  EncoderState st;
  const float inv = 1.0f / static_cast<float>(enc.rows.size() + enc.soft.size());
  for (const auto r : enc.rows) {
    const float* row = &w.E[std::size_t{r} * kDim];
    for (std::uint32_t j = 0; j < kDim; ++j) st.h[j] += row[j] * inv;
  }
  for (const auto r : enc.soft) {
    const float* row = &w.S[std::size_t{r} * kDim];
    for (std::uint32_t j = 0; j < kDim; ++j) st.h[j] += row[j] * inv;
  }
  for (std::uint32_t i = 0; i < kDim; ++i) {
    float a = w.w0[i];
    for (std::uint32_t j = 0; j < kDim; ++j) a += w.W[i * kDim + j] * st.h[j];
    st.z[i] = std::tanh(a);
  }
  return st;
}

Vec decoder_input(const Weights& w, const Vec& z, std::size_t step, std::uint32_t prev) {
  Vec s;
  const float* p = &w.P[std::min<std::size_t>(step, kPositions - 1) * kDim];
  const float* q = &w.Q[std::size_t{prev} * kDim];
  for (std::uint32_t j = 0; j < kDim; ++j) s[j] = z[j] + p[j] + q[j];
  return s;
}

/// Log-softmax over all output buckets.
std::vector<double> decoder_log_probs(const Weights& w, const Vec& s) {
  std::vector<double> logits(kBuckets);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::uint32_t v = 0; v < kBuckets; ++v) {
    const float* o = &w.O[std::size_t{v} * kDim];
    double l = w.ob[v];
    for (std::uint32_t j = 0; j < kDim; ++j) l += static_cast<double>(o[j]) * s[j];
    logits[v] = l;
    max_logit = std::max(max_logit, l);
  }
  double sum = 0;
  for (const double l : logits) sum += std::exp(l - max_logit);
  const double log_z = max_logit + std::log(sum);
  for (double& l : logits) l -= log_z;
  return logits;
}

std::array<double, 2> head_probs(const Weights& w, const Vec& z) {
  std::array<double, 2> logit{};
  for (std::size_t k = 0; k < 2; ++k) {
    logit[k] = w.c[k];
    for (std::uint32_t j = 0; j < kDim; ++j) logit[k] += static_cast<double>(w.C[k * kDim + j]) * z[j];
  }
  const double m = std::max(logit[0], logit[1]);
  const double e0 = std::exp(logit[0] - m);
  const double e1 = std::exp(logit[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double mean_token_log_prob(const Weights& w, const Vec& z, const std::vector<std::uint32_t>& target) {
  double total = 0;
  std::uint32_t prev = kBos;
  for (std::size_t k = 0; k < target.size(); ++k) {
    total += decoder_log_probs(w, decoder_input(w, z, k, prev))[target[k]];
    prev = target[k];
  }
  return target.empty() ? 0.0 : total / static_cast<double>(target.size());
}

// ---------------------------------------------------------------------------

struct Prepared {
  Encoded enc;
  int label = -1;                      // pair classification
  std::vector<std::uint32_t> target;   // decoder tasks
};

struct Grads {
  std::map<std::uint32_t, Vec> E;
  Weights dense;  // E unused; other tensors hold gradients

  Grads() { dense.E.clear(); }
  void zero() {
    E.clear();
    for (auto* t : dense.tensors()) std::fill(t->begin(), t->end(), 0.0f);
  }
};

/// Loss of one example; accumulates gradients scaled by `scale` when given.
double example_loss(const Weights& w, const Prepared& ex, Grads* g, float scale) {
  const EncoderState st = encode(w, ex.enc);
  Vec dz{};
  double loss = 0;

  if (ex.label >= 0) {
    const auto p = head_probs(w, st.z);
    loss = -std::log(std::max(p[static_cast<std::size_t>(ex.label)], 1e-300));
    if (g) {
      for (std::size_t k = 0; k < 2; ++k) {
        const float d = static_cast<float>(p[k] - (static_cast<int>(k) == ex.label ? 1.0 : 0.0)) * scale;
        g->dense.c[k] += d;
        for (std::uint32_t j = 0; j < kDim; ++j) {
          g->dense.C[k * kDim + j] += d * st.z[j];
          dz[j] += d * w.C[k * kDim + j];
        }
      }
    }
  } else {
    const float step_scale = scale / static_cast<float>(ex.target.size());
    std::uint32_t prev = kBos;
    for (std::size_t k = 0; k < ex.target.size(); ++k) {
      const Vec s = decoder_input(w, st.z, k, prev);
      const auto lp = decoder_log_probs(w, s);
      const std::uint32_t y = ex.target[k];
      loss -= lp[y];
      if (g) {
        Vec ds{};
        for (std::uint32_t v = 0; v < kBuckets; ++v) {
          const float d = static_cast<float>(std::exp(lp[v]) - (v == y ? 1.0 : 0.0)) * step_scale;
          if (d == 0.0f) continue;
          g->dense.ob[v] += d;
          float* go = &g->dense.O[std::size_t{v} * kDim];
          const float* o = &w.O[std::size_t{v} * kDim];
          for (std::uint32_t j = 0; j < kDim; ++j) {
            go[j] += d * s[j];
            ds[j] += d * o[j];
          }
        }
        float* gp = &g->dense.P[std::min<std::size_t>(k, kPositions - 1) * kDim];
        float* gq = &g->dense.Q[std::size_t{prev} * kDim];
        for (std::uint32_t j = 0; j < kDim; ++j) {
          gp[j] += ds[j];
          gq[j] += ds[j];
          dz[j] += ds[j];
        }
      }
      prev = y;
    }
    loss /= static_cast<double>(ex.target.size());
  }

  if (g) {
    Vec da;
    for (std::uint32_t i = 0; i < kDim; ++i) da[i] = dz[i] * (1.0f - st.z[i] * st.z[i]);
    Vec dh{};
    for (std::uint32_t i = 0; i < kDim; ++i) {
      g->dense.w0[i] += da[i];
      for (std::uint32_t j = 0; j < kDim; ++j) {
        g->dense.W[i * kDim + j] += da[i] * st.h[j];
        dh[j] += da[i] * w.W[i * kDim + j];
      }
    }
    const float inv = 1.0f / static_cast<float>(ex.enc.rows.size() + ex.enc.soft.size());
    for (const auto r : ex.enc.rows) {
      Vec& ge = g->E[r];
      for (std::uint32_t j = 0; j < kDim; ++j) ge[j] += dh[j] * inv;
    }
    for (const auto r : ex.enc.soft) {
      float* gs = &g->dense.S[std::size_t{r} * kDim];
      for (std::uint32_t j = 0; j < kDim; ++j) gs[j] += dh[j] * inv;
    }
  }
  return loss;
}

class Adam {
 public:
  explicit Adam(const Weights& shape) : m_(shape), v_(shape) {
    for (auto* t : m_.tensors()) std::fill(t->begin(), t->end(), 0.0f);
    for (auto* t : v_.tensors()) std::fill(t->begin(), t->end(), 0.0f);
  }

  void step(Weights& w, const Grads& g, double lr, double soft_lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    // Embedding rows are updated lazily: only rows that received gradient.
    for (const auto& [row, grad] : g.E) {
      const std::size_t base = std::size_t{row} * kDim;
      for (std::uint32_t j = 0; j < kDim; ++j) update(w.E[base + j], m_.E[base + j], v_.E[base + j], grad[j], lr, c1, c2);
    }
    const auto wt = w.tensors();
    const auto mt = m_.tensors();
    const auto vt = v_.tensors();
    const auto gt = g.dense.tensors();
    for (std::size_t k = 1; k < wt.size(); ++k) {
      const double rate = k == 1 ? soft_lr : lr;
      auto& param = *wt[k];
      for (std::size_t i = 0; i < param.size(); ++i) update(param[i], (*mt[k])[i], (*vt[k])[i], (*gt[k])[i], rate, c1, c2);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  static void update(float& p, float& m, float& v, float g, double lr, double c1, double c2) {
    m = static_cast<float>(kBeta1 * m + (1 - kBeta1) * g);
    v = static_cast<float>(kBeta2 * v + (1 - kBeta2) * static_cast<double>(g) * g);
    p -= static_cast<float>(lr * (m / c1) / (std::sqrt(v / c2) + kEps));
  }

  Weights m_;
  Weights v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------

Weights initial_weights(const CheckpointRef& ref, Task task, std::uint64_t seed) {
  Weights w;
  Rng rng(seed ^ fnv1a64(ref.model_id) ^ (static_cast<std::uint64_t>(task) + 1) * 0x9e3779b97f4a7c15ull);
  const auto fill = [&rng](std::vector<float>& t, double scale) {
    for (float& x : t) x = static_cast<float>(rng.uniform(-scale, scale));
  };
  fill(w.E, 0.5);
  fill(w.S, 0.05);
  fill(w.W, 1.0 / std::sqrt(static_cast<double>(kDim)));
  fill(w.C, 0.1);
  fill(w.P, 0.1);
  fill(w.Q, 0.1);
  fill(w.O, 0.1);
  return w;
}

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::string serialize(const Weights& w) {
  std::string out(kMagic);
  for (const std::uint32_t dim : {kHashRows, kDim, kSoftRows, kPositions, kBuckets}) put_u32(out, dim);
  for (const auto* t : w.tensors()) {
    out.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(float));
  }
  put_u32(out, static_cast<std::uint32_t>(w.vocab.size()));
  for (const auto& [bucket, token] : w.vocab) {
    put_u32(out, bucket);
    put_u32(out, static_cast<std::uint32_t>(token.size()));
    out += token;
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const std::string& blob) : blob_(blob) {}
  void take(void* dst, std::size_t n) {
    if (pos_ + n > blob_.size()) fail(ErrorCode::ArtifactCorrupt, "native weights are truncated");
    std::memcpy(dst, blob_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    take(&v, 4);
    return v;
  }
  bool done() const { return pos_ == blob_.size(); }

 private:
  const std::string& blob_;
  std::size_t pos_ = 0;
};

Weights deserialize(const std::string& blob) {
  if (!blob.starts_with(kMagic)) fail(ErrorCode::ArtifactCorrupt, "weights were not written by the native runtime");
  Reader in(blob);
  std::string magic(kMagic.size(), '\0');
  in.take(magic.data(), magic.size());
  for (const std::uint32_t dim : {kHashRows, kDim, kSoftRows, kPositions, kBuckets}) {
    if (in.u32() != dim) fail(ErrorCode::ArtifactCorrupt, "native weights have unexpected dimensions");
  }
  Weights w;
  for (auto* t : w.tensors()) in.take(t->data(), t->size() * sizeof(float));
  const std::uint32_t n = in.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t bucket = in.u32();
    std::string token(in.u32(), '\0');
    in.take(token.data(), token.size());
    w.vocab.emplace(bucket, std::move(token));
  }
  if (!in.done()) fail(ErrorCode::ArtifactCorrupt, "trailing bytes in native weights");
  return w;
}

// ---------------------------------------------------------------------------

class NativeModel final : public Model {
 public:
  NativeModel(CheckpointRef ref, Task task, std::shared_ptr<const Weights> w, int max_len)
      : Model(std::move(ref), task), w_(std::move(w)), max_len_(max_len) {}

 protected:
  std::vector<double> do_score_answers(const PromptInstance& instance,
                                       std::span<const std::string> words) const override {
    const EncoderState st = encode(*w_, encode_prompt(instance, max_len_));
    std::vector<double> scores;
    for (const auto& word : words) {
      const auto target = target_buckets(word, false);
      if (target.empty()) fail(ErrorCode::SpecInvalid, "answer word '" + word + "' has no tokens");
      scores.push_back(mean_token_log_prob(*w_, st.z, target));
    }
    return scores;
  }

  std::vector<std::string> do_generate(std::string_view source, const DecodeOptions& decode) const override {
    const EncoderState st = encode(*w_, encode_source(source, checkpoint().mask_marker, max_len_));
    std::vector<std::uint32_t> allowed{kEos};
    for (const auto& [bucket, token] : w_->vocab) allowed.push_back(bucket);
    const std::size_t width =
        decode.strategy == DecodeOptions::Strategy::greedy ? 1 : static_cast<std::size_t>(decode.beam_width);
    const auto best = beam_search(st.z, allowed, width, static_cast<std::size_t>(decode.max_new_tokens));
    std::vector<std::string> tokens;
    for (const auto b : best) tokens.push_back(w_->vocab.at(b));
    return tokens;
  }

  std::array<double, 2> do_predict_class(std::string_view a, std::optional<std::string_view> b) const override {
    return head_probs(*w_, encode(*w_, encode_pair(a, b, max_len_)).z);
  }

 private:
  struct Beam {
    std::vector<std::uint32_t> tokens;
    double log_prob = 0;
    bool finished = false;
    double normalized() const { return log_prob / static_cast<double>(tokens.size() + 1); }
  };

  std::vector<std::uint32_t> beam_search(const Vec& z, const std::vector<std::uint32_t>& allowed, std::size_t width,
                                         std::size_t max_len) const {
    std::vector<Beam> beams{Beam{}};
    for (std::size_t step = 0; step < max_len; ++step) {
      std::vector<Beam> next;
      for (const auto& beam : beams) {
        if (beam.finished) {
          next.push_back(beam);
          continue;
        }
        const std::uint32_t prev = beam.tokens.empty() ? kBos : beam.tokens.back();
        const auto lp = decoder_log_probs(*w_, decoder_input(*w_, z, step, prev));
        for (const auto v : allowed) {
          Beam b = beam;
          b.log_prob += lp[v];
          if (v == kEos) {
            b.finished = true;
          } else {
            b.tokens.push_back(v);
          }
          next.push_back(std::move(b));
        }
      }
      std::stable_sort(next.begin(), next.end(), [](const Beam& a, const Beam& b) { return a.log_prob > b.log_prob; });
      if (next.size() > width) next.resize(width);
      beams = std::move(next);
      if (std::all_of(beams.begin(), beams.end(), [](const Beam& b) { return b.finished; })) break;
    }
    const auto best = std::max_element(beams.begin(), beams.end(), [](const Beam& a, const Beam& b) {
      return a.normalized() < b.normalized();
    });
    return best->tokens;
  }

  std::shared_ptr<const Weights> w_;
  int max_len_;
};

std::vector<Prepared> prepare(const TrainingData& data, const CheckpointRef& ref, int max_len, Weights* vocab_sink) {
  std::vector<Prepared> out;
  std::visit(
      [&](const auto& examples) {
        for (const auto& ex : examples) {
          using T = std::decay_t<decltype(ex)>;
          Prepared p;
          if constexpr (std::is_same_v<T, PairExample>) {
            if (ex.label != 0 && ex.label != 1) fail(ErrorCode::IncompatibleTask, "pair labels must be 0 or 1");
            p.enc = encode_pair(ex.text_a, ex.text_b ? std::optional<std::string_view>(*ex.text_b) : std::nullopt,
                                max_len);
            p.label = ex.label;
          } else if constexpr (std::is_same_v<T, PromptedExample>) {
            p.enc = encode_prompt(ex.instance, max_len);
            p.target = target_buckets(ex.target, false);
            if (p.target.empty()) fail(ErrorCode::IncompatibleTask, "empty answer target");
          } else {
            p.enc = encode_source(ex.source, ref.mask_marker, max_len);
            p.target = target_buckets(ex.target, true);
            if (vocab_sink) {
              for (const auto& t : surface_tokens(ex.target)) vocab_sink->vocab.emplace(token_bucket(t), t);
            }
          }
          out.push_back(std::move(p));
        }
      },
      data);
  return out;
}

double mean_loss(const Weights& w, const std::vector<Prepared>& examples) {
  double total = 0;
  for (const auto& ex : examples) total += example_loss(w, ex, nullptr, 0.0f);
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

/// Soft tokens with init text start from the mean embedding of their words.
void initialize_soft_rows(Weights& w, const TrainingData& data) {
  const auto* prompted = std::get_if<std::vector<PromptedExample>>(&data);
  if (!prompted) return;
  std::set<std::uint32_t> done;
  for (const auto& ex : *prompted) {
    for (const auto& pos : ex.instance.soft_positions) {
      const std::uint32_t row = soft_row(ex.instance.template_name, pos.share_key);
      if (pos.length == 0 || done.contains(row)) continue;
      const auto words = word_tokens(ex.instance.rendered_text.substr(pos.offset, pos.length));
      if (words.empty()) continue;
      done.insert(row);
      float* dst = &w.S[std::size_t{row} * kDim];
      std::fill(dst, dst + kDim, 0.0f);
      for (const auto& word : words) {
        const float* src = &w.E[std::size_t{feature_row("p|" + word)} * kDim];
        for (std::uint32_t j = 0; j < kDim; ++j) dst[j] += src[j] / static_cast<float>(words.size());
      }
    }
  }
}

}  // namespace

std::string NativeRuntime::initial_blob(const CheckpointRef& checkpoint, Task task, const TrainConfig& config) const {
  return serialize(initial_weights(checkpoint, task, config.seed));
}

std::unique_ptr<Model> NativeRuntime::do_load(const CheckpointRef& checkpoint, Task task, const std::string& blob,
                                              const TrainConfig& config) const {
  return std::make_unique<NativeModel>(checkpoint, task, std::make_shared<const Weights>(deserialize(blob)),
                                       config.max_input_length);
}

TrainedWeights NativeRuntime::do_finetune(const FinetuneRequest& request) const {
  const TrainConfig& config = request.config;
  Weights w = initial_weights(request.checkpoint, request.task, config.seed);
  const std::vector<Prepared> train = prepare(request.train, request.checkpoint, config.max_input_length, &w);
  const std::vector<Prepared> dev = prepare(request.dev, request.checkpoint, config.max_input_length, &w);

  TrainedWeights out;
  out.initial_loss = mean_loss(w, train);
  const std::int64_t max_steps = config.max_steps.value_or(std::numeric_limits<std::int64_t>::max());
  if (max_steps == 0 || train.empty()) {
    out.blob = serialize(w);
    return out;
  }
  initialize_soft_rows(w, request.train);

  const double lr = config.learning_rate;
  const double soft_lr = config.soft_prompt_learning_rate.value_or(lr);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  Adam adam(w);
  Grads grads;
  Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::optional<Weights> best;
  std::optional<double> best_score;
  std::int64_t steps = 0;
  for (int epoch = 1; epoch <= config.epochs && steps < max_steps; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size() && steps < max_steps; start += batch, ++steps) {
      const std::size_t end = std::min(order.size(), start + batch);
      grads.zero();
      const float scale = 1.0f / static_cast<float>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const double loss = example_loss(w, train[order[i]], &grads, scale);
        if (!std::isfinite(loss)) {
          fail(ErrorCode::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch));
        }
        epoch_loss += loss;
        ++seen;
      }
      adam.step(w, grads, lr, soft_lr);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_loss / static_cast<double>(seen);
    if (!dev.empty()) m.dev_loss = mean_loss(w, dev);
    if (m.dev_loss && !std::isfinite(*m.dev_loss)) fail(ErrorCode::DivergedLoss, "non-finite dev loss");
    if (request.dev_evaluator) {
      const NativeModel probe(request.checkpoint, request.task, std::make_shared<const Weights>(w),
                              config.max_input_length);
      m.dev_macro_f1 = request.dev_evaluator(probe);
      if (m.dev_macro_f1 && (!best_score || *m.dev_macro_f1 > *best_score)) {
        best_score = m.dev_macro_f1;
        best = w;
        out.selected_epoch = epoch;
      }
    }
    out.metrics.push_back(m);
  }
  if (!best) out.selected_epoch = out.metrics.empty() ? std::nullopt : std::optional<int>(out.metrics.back().epoch);
  out.blob = serialize(best ? *best : w);
  return out;
}

}  // namespace kpa
