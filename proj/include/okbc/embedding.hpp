#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "common.hpp"
#include "kb_model.hpp"
#include "side_info.hpp"

namespace okbc {

// ---------------------------------------------------------------------------
// Circular correlation and convolution
// ---------------------------------------------------------------------------

// out[k] = sum_i a[i] * b[(k + i) mod d]
inline void circular_correlation(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  if (a.size() != b.size() || out.size() != a.size())
    throw ArgumentError("circular_correlation: dimension mismatch");
  const std::size_t d = a.size();
  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * b[(k + i) % d];
    out[k] = s;
  }
}

inline std::vector<double> circular_correlation(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  circular_correlation(a, b, out);
  return out;
}

// out[k] = sum_i a[i] * b[(k - i) mod d]
inline void circular_convolution(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  if (a.size() != b.size() || out.size() != a.size())
    throw ArgumentError("circular_convolution: dimension mismatch");
  const std::size_t d = a.size();
  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * b[(k + d - i) % d];
    out[k] = s;
  }
}

// FFTW-backed correlation/convolution for one fixed dimension. Not thread-safe;
// give each worker its own instance.
class FftCorrelator {
 public:
  explicit FftCorrelator(std::size_t dim) : dim_(dim), spec_(dim / 2 + 1) {
    if (dim == 0) throw ArgumentError("FftCorrelator: zero dimension");
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * dim));
    freq_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spec_));
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(dim), real_, freq_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(static_cast<int>(dim), freq_, real_, FFTW_ESTIMATE);
  }
  FftCorrelator(const FftCorrelator&) = delete;
  FftCorrelator& operator=(const FftCorrelator&) = delete;
  ~FftCorrelator() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(freq_);
  }

  std::size_t dim() const noexcept { return dim_; }

  void correlate(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    combine(a, b, out, true);
  }
  void convolve(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    combine(a, b, out, false);
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  void transform(std::span<const double> x, std::vector<std::complex<double>>& dest) {
    std::copy(x.begin(), x.end(), real_);
    fftw_execute(forward_);
    dest.resize(spec_);
    for (std::size_t j = 0; j < spec_; ++j) dest[j] = {freq_[j][0], freq_[j][1]};
  }

  void combine(std::span<const double> a, std::span<const double> b, std::span<double> out, bool conj_a) {
    if (a.size() != dim_ || b.size() != dim_ || out.size() != dim_)
      throw ArgumentError("FftCorrelator: dimension mismatch");
    transform(a, fa_);
    transform(b, fb_);
    for (std::size_t j = 0; j < spec_; ++j) {
      const auto prod = (conj_a ? std::conj(fa_[j]) : fa_[j]) * fb_[j];
      freq_[j][0] = prod.real();
      freq_[j][1] = prod.imag();
    }
    fftw_execute(backward_);
    const double scale = 1.0 / static_cast<double>(dim_);
    for (std::size_t k = 0; k < dim_; ++k) out[k] = real_[k] * scale;
  }

  std::size_t dim_;
  std::size_t spec_;
  double* real_ = nullptr;
  fftw_complex* freq_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
  std::vector<std::complex<double>> fa_, fb_;
};

inline std::vector<double> fft_circular_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("circular_correlation: dimension mismatch");
  FftCorrelator engine(a.size());
  std::vector<double> out(a.size());
  engine.correlate(a, b, out);
  return out;
}

enum class CorrelationMethod { Auto, Direct, Fft };

// Dispatches to the direct sums or FFTW depending on method and dimension.
class CorrelationKernel {
 public:
  CorrelationKernel(std::size_t dim, CorrelationMethod method) {
    if (method == CorrelationMethod::Fft || (method == CorrelationMethod::Auto && dim >= 64))
      fft_ = std::make_unique<FftCorrelator>(dim);
  }
  void correlate(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    fft_ ? fft_->correlate(a, b, out) : circular_correlation(a, b, out);
  }
  void convolve(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    fft_ ? fft_->convolve(a, b, out) : circular_convolution(a, b, out);
  }

 private:
  std::unique_ptr<FftCorrelator> fft_;
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct EmbeddingSet {
  std::size_t dim = 0;
  Matrix np;   // one row per NP id
  Matrix rel;  // one row per relation id

  EmbeddingSet() = default;
  EmbeddingSet(std::size_t n_np, std::size_t n_rel, std::size_t d) : dim(d), np(n_np, d), rel(n_rel, d) {}

  Matrix& of(Kind k) { return k == Kind::NP ? np : rel; }
  const Matrix& of(Kind k) const { return k == Kind::NP ? np : rel; }

  bool all_finite() const {
    for (const auto* m : {&np, &rel})
      for (double v : m->data())
        if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const EmbeddingSet&) const = default;
};

enum class HingeForm {
  Sigmoid,  // max(0, margin + sigmoid(eta_neg) - sigmoid(eta_pos))
  Raw,      // max(0, margin + eta_neg - eta_pos)
};

enum class HingePairing {
  PerPositive,   // each positive against its own sampled negatives
  CrossProduct,  // every positive in the batch against every negative in the batch
};

enum class Optimizer { Sgd, Adagrad };

struct HyperParams {
  std::size_t dim = 300;
  double margin = 0.5;
  double lambda_str = 1.0;
  // Per-source weights; sources absent from the map use the default.
  std::map<std::string, double> lambda_ent;
  std::map<std::string, double> lambda_rel;
  double lambda_ent_default = 0.1;
  double lambda_rel_default = 0.1;
  double lambda_reg = 1e-4;
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  std::size_t negatives_per_positive = 2;
  std::size_t max_negative_retries = 10;
  std::uint64_t seed = 0;
  HingeForm hinge = HingeForm::Sigmoid;
  HingePairing pairing = HingePairing::PerPositive;
  Optimizer optimizer = Optimizer::Sgd;
  CorrelationMethod correlation = CorrelationMethod::Auto;
  // 1 = deterministic single-threaded mode.
  std::size_t threads = 1;

  double ent_weight(const std::string& source) const {
    auto it = lambda_ent.find(source);
    return it == lambda_ent.end() ? lambda_ent_default : it->second;
  }
  double rel_weight(const std::string& source) const {
    auto it = lambda_rel.find(source);
    return it == lambda_rel.end() ? lambda_rel_default : it->second;
  }

  void validate() const {
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (dim == 0) throw ConfigError("dim must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (lambda_str < 0.0 || lambda_reg < 0.0 || lambda_ent_default < 0.0 || lambda_rel_default < 0.0)
      throw ConfigError("lambda weights must be non-negative");
    for (const auto* m : {&lambda_ent, &lambda_rel})
      for (const auto& [k, v] : *m)
        if (v < 0.0) throw ConfigError("lambda for source '" + k + "' must be non-negative");
    if (threads == 0) throw ConfigError("threads must be at least 1");
  }
};

// Zeroes every side-information weight, giving the structure-only objective.
inline HyperParams without_side_info(HyperParams h) {
  h.lambda_ent.clear();
  h.lambda_rel.clear();
  h.lambda_ent_default = 0.0;
  h.lambda_rel_default = 0.0;
  return h;
}

struct TrainingBatch {
  std::vector<TripleKey> positives;
  std::vector<std::vector<TripleKey>> negatives;  // aligned with positives
};

// ---------------------------------------------------------------------------
// Scoring and negative sampling
// ---------------------------------------------------------------------------

inline void check_ids(const EmbeddingSet& emb, PhraseId s, PhraseId p, PhraseId o) {
  if (s >= emb.np.rows() || o >= emb.np.rows() || p >= emb.rel.rows())
    throw LookupError("triple references a phrase without an embedding");
}

inline double score_triple(const EmbeddingSet& emb, PhraseId s, PhraseId p, PhraseId o) {
  check_ids(emb, s, p, o);
  std::vector<double> corr(emb.dim);
  circular_correlation(emb.np.row(s), emb.np.row(o), corr);
  return dot(emb.rel.row(p), corr);
}

struct NegativeStats {
  std::size_t requested = 0;
  std::size_t emitted = 0;
  std::size_t skipped = 0;
};

// Local closed-world corruption: replace subject or object with a uniformly
// drawn NP, rejecting candidates that are KB triples.
template <class Rng>
std::vector<TripleKey> sample_negatives(const OpenKB& kb, const TripleKey& t, std::size_t k, Rng& rng,
                                        std::size_t max_retries = 10, NegativeStats* stats = nullptr) {
  if (k == 0) throw ArgumentError("sample_negatives: k must be at least 1");
  std::vector<TripleKey> out;
  const auto n = kb.np_vocab().size();
  for (std::size_t i = 0; i < k; ++i) {
    bool found = false;
    for (std::size_t attempt = 0; attempt < max_retries && !found; ++attempt) {
      TripleKey cand = t;
      const bool corrupt_subject = uniform_index(rng, 2) == 0;
      const auto np = static_cast<PhraseId>(uniform_index(rng, n));
      (corrupt_subject ? cand.s : cand.o) = np;
      if (!kb.contains(cand)) {
        out.push_back(cand);
        found = true;
      }
    }
    if (stats) ++(found ? stats->emitted : stats->skipped);
  }
  if (stats) stats->requested += k;
  return out;
}

// ---------------------------------------------------------------------------
// Objective and gradient
// ---------------------------------------------------------------------------

struct LossTerms {
  double ranking = 0.0;
  double side_ent = 0.0;
  double side_rel = 0.0;
  double regularization = 0.0;
  double total() const { return ranking + side_ent + side_rel + regularization; }
};

struct Gradients {
  Matrix np;
  Matrix rel;
  Gradients() = default;
  explicit Gradients(const EmbeddingSet& emb) : np(emb.np.rows(), emb.dim), rel(emb.rel.rows(), emb.dim) {}
  Matrix& of(Kind k) { return k == Kind::NP ? np : rel; }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

// Accumulates the ranking term for positives [begin, end) and returns its loss.
// Gradients are added into `grad` when non-null.
inline double ranking_term(const EmbeddingSet& emb, const TrainingBatch& batch, const HyperParams& h,
                           std::size_t begin, std::size_t end, Gradients* grad, CorrelationKernel& kernel) {
  if (h.lambda_str == 0.0) return 0.0;
  const std::size_t d = emb.dim;
  std::vector<double> buf(d), tmp(d);

  const auto eta = [&](const TripleKey& t) {
    check_ids(emb, t.s, t.p, t.o);
    kernel.correlate(emb.np.row(t.s), emb.np.row(t.o), buf);
    return dot(emb.rel.row(t.p), buf);
  };
  const auto squash = [&](double x) { return h.hinge == HingeForm::Sigmoid ? sigmoid(x) : x; };
  const auto squash_grad = [&](double x) {
    if (h.hinge == HingeForm::Raw) return 1.0;
    const double s = sigmoid(x);
    return s * (1.0 - s);
  };
  // d eta / d params, scaled by coef.
  const auto backprop = [&](const TripleKey& t, double coef) {
    if (coef == 0.0) return;
    auto es = emb.np.row(t.s), eo = emb.np.row(t.o), rp = emb.rel.row(t.p);
    kernel.correlate(es, eo, tmp);
    auto gr = grad->rel.row(t.p);
    for (std::size_t i = 0; i < d; ++i) gr[i] += coef * tmp[i];
    kernel.correlate(rp, eo, tmp);
    auto gs = grad->np.row(t.s);
    for (std::size_t i = 0; i < d; ++i) gs[i] += coef * tmp[i];
    kernel.convolve(rp, es, tmp);
    auto go = grad->np.row(t.o);
    for (std::size_t i = 0; i < d; ++i) go[i] += coef * tmp[i];
  };

  double loss = 0.0;
  const auto hinge_pair = [&](const TripleKey& pos, double eta_pos, const TripleKey& neg, double eta_neg) {
    const double margin_violation = h.margin + squash(eta_neg) - squash(eta_pos);
    if (margin_violation <= 0.0) return;
    loss += h.lambda_str * margin_violation;
    if (grad) {
      backprop(neg, h.lambda_str * squash_grad(eta_neg));
      backprop(pos, -h.lambda_str * squash_grad(eta_pos));
    }
  };

  if (h.pairing == HingePairing::PerPositive) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& pos = batch.positives[i];
      const double eta_pos = eta(pos);
      for (const auto& neg : batch.negatives[i]) hinge_pair(pos, eta_pos, neg, eta(neg));
    }
  } else {
    std::vector<std::pair<TripleKey, double>> negs;
    for (const auto& group : batch.negatives)
      for (const auto& neg : group) negs.emplace_back(neg, eta(neg));
    for (std::size_t i = begin; i < end; ++i) {
      const auto& pos = batch.positives[i];
      const double eta_pos = eta(pos);
      for (const auto& [neg, eta_neg] : negs) hinge_pair(pos, eta_pos, neg, eta_neg);
    }
  }
  return loss;
}

inline double side_term(const Matrix& vecs, const EquivalencePairSet& source, double lambda, double weight,
                        Matrix* grad) {
  if (source.empty() || lambda == 0.0) return 0.0;
  const double coef = weight * lambda / static_cast<double>(source.size());
  double sum = 0.0;
  const std::size_t d = vecs.cols();
  for (const auto& [a, b] : source) {
    if (a >= vecs.rows() || b >= vecs.rows()) throw LookupError("side-information pair without embedding");
    auto va = vecs.row(a), vb = vecs.row(b);
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = va[i] - vb[i];
      sum += diff * diff;
      if (grad) {
        grad->row(a)[i] += 2.0 * coef * diff;
        grad->row(b)[i] -= 2.0 * coef * diff;
      }
    }
  }
  return coef * sum;
}

}  // namespace detail

// Full objective on one batch. Side-information and regularization terms are
// multiplied by `global_weight`; 1 gives the objective as written, the trainer
// passes the batch's share of the training set. When `grad` is non-null it is
// overwritten with the analytic gradient.
inline LossTerms evaluate_objective(const EmbeddingSet& emb, const TrainingBatch& batch,
                                    const SideInfoCollection& side, const HyperParams& h, Gradients* grad = nullptr,
                                    double global_weight = 1.0, std::size_t threads = 1) {
  if (batch.negatives.size() != batch.positives.size())
    throw ArgumentError("batch negatives are not aligned with positives");
  if (grad) {
    if (grad->np.rows() != emb.np.rows() || grad->np.cols() != emb.dim || grad->rel.rows() != emb.rel.rows())
      *grad = Gradients(emb);
    else {
      grad->np.fill(0.0);
      grad->rel.fill(0.0);
    }
  }
  LossTerms loss;

  const std::size_t n_pos = batch.positives.size();
  threads = std::max<std::size_t>(1, std::min(threads, n_pos));
  if (threads == 1) {
    CorrelationKernel kernel(emb.dim, h.correlation);
    loss.ranking = detail::ranking_term(emb, batch, h, 0, n_pos, grad, kernel);
  } else {
    std::vector<Gradients> partial(threads);
    std::vector<double> partial_loss(threads, 0.0);
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          const std::size_t begin = n_pos * w / threads, end = n_pos * (w + 1) / threads;
          if (grad) partial[w] = Gradients(emb);
          CorrelationKernel kernel(emb.dim, h.correlation);
          partial_loss[w] = detail::ranking_term(emb, batch, h, begin, end, grad ? &partial[w] : nullptr, kernel);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (std::size_t w = 0; w < threads; ++w) {
      loss.ranking += partial_loss[w];
      if (!grad) continue;
      for (std::size_t i = 0; i < grad->np.data().size(); ++i) grad->np.data()[i] += partial[w].np.data()[i];
      for (std::size_t i = 0; i < grad->rel.data().size(); ++i) grad->rel.data()[i] += partial[w].rel.data()[i];
    }
  }

  for (const auto& src : side.np_sources)
    loss.side_ent += detail::side_term(emb.np, src, h.ent_weight(src.source_name()), global_weight,
                                       grad ? &grad->np : nullptr);
  for (const auto& src : side.rel_sources)
    loss.side_rel += detail::side_term(emb.rel, src, h.rel_weight(src.source_name()), global_weight,
                                       grad ? &grad->rel : nullptr);

  if (h.lambda_reg != 0.0) {
    const double coef = global_weight * h.lambda_reg;
    double sq = squared_norm(emb.np.data()) + squared_norm(emb.rel.data());
    loss.regularization = coef * sq;
    if (grad) {
      for (std::size_t i = 0; i < emb.np.data().size(); ++i) grad->np.data()[i] += 2.0 * coef * emb.np.data()[i];
      for (std::size_t i = 0; i < emb.rel.data().size(); ++i) grad->rel.data()[i] += 2.0 * coef * emb.rel.data()[i];
    }
  }
  return loss;
}

inline double objective(const EmbeddingSet& emb, const TrainingBatch& batch, const SideInfoCollection& side,
                        const HyperParams& h) {
  return evaluate_objective(emb, batch, side, h).total();
}

inline Gradients gradient(const EmbeddingSet& emb, const TrainingBatch& batch, const SideInfoCollection& side,
                          const HyperParams& h) {
  Gradients g(emb);
  evaluate_objective(emb, batch, side, h, &g);
  return g;
}

// ---------------------------------------------------------------------------
// Initialization from pretrained word vectors
// ---------------------------------------------------------------------------

// Lowercased whitespace tokens, the lookup unit for word vectors.
inline std::vector<std::string> vector_tokens(std::string_view phrase) { return split_whitespace(to_lower(phrase)); }

struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> table;

  const std::vector<double>* find(const std::string& token) const {
    auto it = table.find(token);
    return it == table.end() ? nullptr : &it->second;
  }
};

// Lines `token v_1 ... v_d`. When `wanted` is given only those tokens are kept.
inline WordVectors parse_word_vectors(std::istream& in, std::size_t dim,
                                      const std::unordered_set<std::string>* wanted = nullptr) {
  WordVectors wv;
  wv.dim = dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != dim + 1)
      throw ConfigError("word vector at line " + std::to_string(line_no) + " has dimension " +
                        std::to_string(fields.size() - 1) + ", expected " + std::to_string(dim));
    if (wanted && !wanted->contains(fields[0])) continue;
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      try {
        v[i] = std::stod(fields[i + 1]);
      } catch (const std::exception&) {
        throw ParseError("non-numeric word vector entry", line_no);
      }
    }
    wv.table.insert_or_assign(fields[0], std::move(v));
  }
  return wv;
}

inline WordVectors load_word_vectors(const std::string& path, std::size_t dim,
                                     const std::unordered_set<std::string>* wanted = nullptr) {
  auto in = open_input(path);
  return parse_word_vectors(in, dim, wanted);
}

inline std::unordered_set<std::string> kb_tokens(const OpenKB& kb) {
  std::unordered_set<std::string> out;
  for (Kind k : {Kind::NP, Kind::REL})
    for (const auto& p : kb.vocab(k))
      for (auto& t : vector_tokens(p.text)) out.insert(std::move(t));
  return out;
}

// Mean of the phrase's known token vectors; a uniform draw from
// [-0.1/sqrt(d), 0.1/sqrt(d)] when no token is known.
template <class Rng>
void phrase_vector(std::string_view phrase, const WordVectors* vectors, std::span<double> out, Rng& rng) {
  std::fill(out.begin(), out.end(), 0.0);
  std::size_t found = 0;
  if (vectors) {
    if (vectors->dim != out.size()) throw ConfigError("word vector dimension differs from embedding dimension");
    for (const auto& tok : vector_tokens(phrase)) {
      if (const auto* v = vectors->find(tok)) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*v)[i];
        ++found;
      }
    }
  }
  if (found > 0) {
    for (auto& x : out) x /= static_cast<double>(found);
    return;
  }
  const double bound = 0.1 / std::sqrt(static_cast<double>(out.size()));
  for (auto& x : out) x = (2.0 * uniform01(rng) - 1.0) * bound;
}

template <class Rng>
std::vector<double> wordvec_phrase_embedding(std::string_view phrase, const WordVectors* vectors, std::size_t dim,
                                             Rng& rng) {
  std::vector<double> out(dim);
  phrase_vector(phrase, vectors, out, rng);
  return out;
}

// NP rows are filled first, then relation rows; fallback draws consume the
// generator in that order.
inline EmbeddingSet init_embeddings(const OpenKB& kb, const WordVectors* vectors, std::size_t dim,
                                    std::uint64_t seed) {
  if (vectors && vectors->dim != dim) throw ConfigError("word vector dimension differs from embedding dimension");
  EmbeddingSet emb(kb.np_vocab().size(), kb.rel_vocab().size(), dim);
  std::mt19937_64 rng(seed);
  for (Kind k : {Kind::NP, Kind::REL})
    for (const auto& p : kb.vocab(k)) phrase_vector(p.text, vectors, emb.of(k).row(p.id), rng);
  return emb;
}

inline EmbeddingSet init_embeddings(const OpenKB& kb, const std::string& vectors_path, std::size_t dim,
                                    std::uint64_t seed) {
  if (vectors_path.empty()) return init_embeddings(kb, nullptr, dim, seed);
  const auto wanted = kb_tokens(kb);
  const auto wv = load_word_vectors(vectors_path, dim, &wanted);
  return init_embeddings(kb, &wv, dim, seed);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainingDiverged : Error {
  using Error::Error;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossTerms loss;
  std::size_t negatives_skipped = 0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  EmbeddingSet embeddings;
  std::vector<EpochRecord> log;
};

inline TrainResult train(const OpenKB& kb, const SideInfoCollection& side, const HyperParams& h, EmbeddingSet init,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  h.validate();
  if (init.dim != h.dim || init.np.rows() != kb.np_vocab().size() || init.rel.rows() != kb.rel_vocab().size())
    throw ConfigError("initial embeddings do not cover the vocabulary at the configured dimension");

  TrainResult result{std::move(init), {}};
  auto& emb = result.embeddings;
  std::mt19937_64 rng(h.seed);
  std::vector<TripleKey> positives = kb.distinct_triples();
  const double n_train = static_cast<double>(positives.size());
  Gradients grad(emb);
  Gradients accum;
  if (h.optimizer == Optimizer::Adagrad) accum = Gradients(emb);

  const auto apply = [&](Matrix& param, const Matrix& g, Matrix* acc) {
    auto& p = param.data();
    const auto& gd = g.data();
    if (!acc) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= h.learning_rate * gd[i];
      return;
    }
    auto& a = acc->data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      a[i] += gd[i] * gd[i];
      p[i] -= h.learning_rate * gd[i] / (std::sqrt(a[i]) + 1e-8);
    }
  };

  for (std::size_t epoch = 0; epoch < h.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    NegativeStats stats;
    shuffle(positives, rng);
    for (std::size_t b = 0; b < positives.size(); b += h.batch_size) {
      TrainingBatch batch;
      const std::size_t e = std::min(positives.size(), b + h.batch_size);
      batch.positives.assign(positives.begin() + static_cast<std::ptrdiff_t>(b),
                             positives.begin() + static_cast<std::ptrdiff_t>(e));
      for (const auto& t : batch.positives)
        batch.negatives.push_back(
            sample_negatives(kb, t, h.negatives_per_positive, rng, h.max_negative_retries, &stats));
      const double weight = static_cast<double>(e - b) / n_train;
      const auto loss = evaluate_objective(emb, batch, side, h, &grad, weight, h.threads);
      if (!std::isfinite(loss.total()))
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                               std::to_string(b));
      rec.loss.ranking += loss.ranking;
      rec.loss.side_ent += loss.side_ent;
      rec.loss.side_rel += loss.side_rel;
      rec.loss.regularization += loss.regularization;
      const bool ada = h.optimizer == Optimizer::Adagrad;
      apply(emb.np, grad.np, ada ? &accum.np : nullptr);
      apply(emb.rel, grad.rel, ada ? &accum.rel : nullptr);
    }
    if (!emb.all_finite()) throw TrainingDiverged("non-finite parameters after epoch " + std::to_string(epoch));
    rec.negatives_skipped = stats.skipped;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(rec);
    result.log.push_back(rec);
  }
  return result;
}

inline nlohmann::json epoch_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"loss_total", r.loss.total()},
          {"loss_ranking", r.loss.ranking},
          {"loss_side_ent", r.loss.side_ent},
          {"loss_side_rel", r.loss.side_rel},
          {"loss_regularization", r.loss.regularization},
          {"negatives_skipped", r.negatives_skipped},
          {"wall_seconds", r.wall_seconds}};
}

// ---------------------------------------------------------------------------
// Checkpoints: a JSON header line, then `KIND <TAB> text <TAB> v_1 ... v_d`.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline std::string vocab_hash(const OpenKB& kb) {
  return hex64(kb.np_vocab().fingerprint() ^ (kb.rel_vocab().fingerprint() * 0x9E3779B97F4A7C15ULL));
}

inline void write_checkpoint(std::ostream& out, const EmbeddingSet& emb, const OpenKB& kb, std::uint64_t seed) {
  nlohmann::json header = {{"format", "okbc-embeddings"},   {"version", kCheckpointVersion},
                           {"dim", emb.dim},                {"seed", seed},
                           {"np_count", emb.np.rows()},     {"rel_count", emb.rel.rows()},
                           {"vocab_hash", vocab_hash(kb)}};
  out << header.dump() << '\n';
  for (Kind k : {Kind::NP, Kind::REL}) {
    for (const auto& p : kb.vocab(k)) {
      out << to_string(k) << '\t' << p.text << '\t';
      auto row = emb.of(k).row(p.id);
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? " " : "") << format_double(row[i]);
      out << '\n';
    }
  }
}

inline void save_checkpoint(const std::string& path, const EmbeddingSet& emb, const OpenKB& kb, std::uint64_t seed) {
  auto out = open_output(path);
  write_checkpoint(out, emb, kb, seed);
}

inline EmbeddingSet read_checkpoint(std::istream& in, const OpenKB& kb) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty checkpoint");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ParseError("checkpoint header is not JSON", 1);
  }
  if (header.value("format", "") != "okbc-embeddings" || header.value("version", 0) != kCheckpointVersion)
    throw ParseError("unsupported checkpoint format or version", 1);
  if (header.value("vocab_hash", "") != vocab_hash(kb))
    throw ConfigError("checkpoint vocabulary does not match the KB");
  const auto dim = header.at("dim").get<std::size_t>();
  EmbeddingSet emb(kb.np_vocab().size(), kb.rel_vocab().size(), dim);
  std::size_t line_no = 1, rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) throw ParseError("malformed checkpoint row", line_no);
    const Kind k = kind_from_string(fields[0]);
    auto id = kb.vocab(k).find(fields[1]);
    if (!id) throw LookupError("checkpoint phrase '" + fields[1] + "' not in KB");
    auto values = split_whitespace(fields[2]);
    if (values.size() != dim) throw ParseError("checkpoint row has wrong dimension", line_no);
    auto row = emb.of(k).row(*id);
    for (std::size_t i = 0; i < dim; ++i) row[i] = std::stod(values[i]);
    ++rows;
  }
  if (rows != kb.np_vocab().size() + kb.rel_vocab().size()) throw ParseError("checkpoint is incomplete");
  return emb;
}

inline EmbeddingSet load_checkpoint(const std::string& path, const OpenKB& kb) {
  auto in = open_input(path);
  return read_checkpoint(in, kb);
}

}  // namespace okbc
