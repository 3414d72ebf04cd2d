// SPDX-License-Identifier: Apache-2.0
#include "galore/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace galore {

namespace {

void require_finite(const Matrix& m, const char* stage) {
  if (!all_finite(m)) throw NumericalError(std::string("forward: non-finite values in ") + stage);
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + " has shape " + m.shape_string() + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void check_batch(const ModelShape& shape, const Batch& batch) {
  if (batch.inputs.empty()) throw DimensionError("batch is empty");
  const std::size_t seq = batch.inputs.front().rows();
  if (seq < 1) throw DimensionError("batch: seq_len must be >= 1");
  for (const Matrix& x : batch.inputs) require_shape(x, seq, shape.layout.d_model, "input");
  require_shape(batch.targets, batch.inputs.size(), shape.out_dim, "targets");
}

void softmax_rows(Matrix& s) {
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& x : row) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (double& x : row) x /= sum;
  }
}

void write_block(Matrix& dst, const Matrix& src, std::size_t first_col) {
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, first_col + j) = src(i, j);
}

void accumulate(Matrix& dst, const Matrix& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Matrix row_mean(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  const double inv = 1.0 / static_cast<double>(m.rows());
  for (double& x : out.data()) x *= inv;
  return out;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv(std::uint64_t& h, const Matrix& m) {
  for (double x : m.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= kFnvPrime;
    }
  }
  std::uint64_t dims = (static_cast<std::uint64_t>(m.rows()) << 32) ^ m.cols();
  h ^= dims;
  h *= kFnvPrime;
}

}  // namespace

const char* role_name(ParamRole role) noexcept {
  switch (role) {
    case ParamRole::wq: return "wq";
    case ParamRole::wk: return "wk";
    case ParamRole::wv: return "wv";
    case ParamRole::wo: return "wo";
    case ParamRole::readout: return "readout";
  }
  return "unknown";
}

void ModelShape::validate() const {
  layout.validate();
  if (out_dim < 1) throw ParameterError("model: out_dim must be >= 1");
}

ModelParams ModelParams::random(const ModelShape& shape, SeededRng& rng) {
  const HeadLayout& l = shape.layout;
  auto init = [&](std::size_t rows, std::size_t cols) {
    return rng.gaussian(rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)));
  };
  ModelParams p;
  p.wq = init(l.d_model, l.qk_width());
  p.wk = init(l.d_model, l.qk_width());
  p.wv = init(l.d_model, l.v_width());
  p.wo = init(l.v_width(), l.d_model);
  p.readout = init(l.d_model, shape.out_dim);
  return p;
}

ModelParams ModelParams::zeros(const ModelShape& shape) {
  const HeadLayout& l = shape.layout;
  return {Matrix(l.d_model, l.qk_width()), Matrix(l.d_model, l.qk_width()),
          Matrix(l.d_model, l.v_width()), Matrix(l.v_width(), l.d_model),
          Matrix(l.d_model, shape.out_dim)};
}

Matrix& ModelParams::operator[](ParamRole role) noexcept {
  switch (role) {
    case ParamRole::wq: return wq;
    case ParamRole::wk: return wk;
    case ParamRole::wv: return wv;
    case ParamRole::wo: return wo;
    case ParamRole::readout: break;
  }
  return readout;
}

const Matrix& ModelParams::operator[](ParamRole role) const noexcept {
  return const_cast<ModelParams&>(*this)[role];
}

void ModelParams::validate(const ModelShape& shape) const {
  const HeadLayout& l = shape.layout;
  require_shape(wq, l.d_model, l.qk_width(), "wq");
  require_shape(wk, l.d_model, l.qk_width(), "wk");
  require_shape(wv, l.d_model, l.v_width(), "wv");
  require_shape(wo, l.v_width(), l.d_model, "wo");
  require_shape(readout, l.d_model, shape.out_dim, "readout");
}

std::uint64_t fingerprint(const ModelParams& params, const Batch& batch) {
  std::uint64_t h = kFnvOffset;
  for (ParamRole role : kAllRoles) fnv(h, params[role]);
  for (const Matrix& x : batch.inputs) fnv(h, x);
  fnv(h, batch.targets);
  return h;
}

ForwardResult forward(const ModelShape& shape, const ModelParams& params, const Batch& batch) {
  params.validate(shape);
  check_batch(shape, batch);
  const HeadLayout& l = shape.layout;
  const std::size_t n = batch.inputs.size();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(l.d_k));

  ForwardResult out;
  ForwardCache& cache = out.cache;
  cache.samples.resize(n);
  Matrix head_means(n, l.v_width());

  for (std::size_t b = 0; b < n; ++b) {
    const Matrix& x = batch.inputs[b];
    SampleCache& sc = cache.samples[b];
    sc.q = matmul(x, params.wq);
    sc.k = matmul(x, params.wk);
    sc.v = matmul(x, params.wv);
    require_finite(sc.q, "query projection");
    require_finite(sc.k, "key projection");
    require_finite(sc.v, "value projection");

    Matrix heads(x.rows(), l.v_width());
    sc.attn.resize(l.heads);
    for (std::size_t h = 0; h < l.heads; ++h) {
      const Matrix qh = column_block(sc.q, h * l.d_k, l.d_k);
      const Matrix kh = column_block(sc.k, h * l.d_k, l.d_k);
      const Matrix vh = column_block(sc.v, h * l.d_v, l.d_v);
      Matrix s = scale(matmul_nt(qh, kh), inv_sqrt_dk);
      require_finite(s, "attention scores");
      softmax_rows(s);
      write_block(heads, matmul(s, vh), h * l.d_v);
      sc.attn[h] = std::move(s);
    }
    require_finite(heads, "attention output");
    sc.head_mean = row_mean(heads);
    for (std::size_t j = 0; j < l.v_width(); ++j) head_means(b, j) = sc.head_mean(0, j);
  }

  cache.pooled = matmul(head_means, params.wo);
  require_finite(cache.pooled, "output projection");
  cache.outputs = matmul(cache.pooled, params.readout);
  require_finite(cache.outputs, "readout");

  double sum = 0.0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < shape.out_dim; ++j) {
      const double d = cache.outputs(b, j) - batch.targets(b, j);
      sum += d * d;
    }
  out.loss = sum / static_cast<double>(n * shape.out_dim);
  if (!std::isfinite(out.loss)) throw NumericalError("forward: non-finite loss");
  cache.fingerprint = fingerprint(params, batch);
  return out;
}

Gradients backward(const ModelShape& shape, const ModelParams& params, const Batch& batch,
                   const ForwardCache& cache) {
  if (cache.fingerprint != fingerprint(params, batch) || cache.samples.size() != batch.inputs.size())
    throw ContractError("backward: cache does not belong to these params and batch");
  const HeadLayout& l = shape.layout;
  const std::size_t n = batch.inputs.size();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(l.d_k));

  Gradients g = ModelParams::zeros(shape);

  // dL/dy
  Matrix dy(n, shape.out_dim);
  const double c = 2.0 / static_cast<double>(n * shape.out_dim);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < shape.out_dim; ++j)
      dy(b, j) = c * (cache.outputs(b, j) - batch.targets(b, j));

  g.readout = matmul_tn(cache.pooled, dy);
  const Matrix dpooled = matmul_nt(dy, params.readout);  // n × d_model

  Matrix head_means(n, l.v_width());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < l.v_width(); ++j) head_means(b, j) = cache.samples[b].head_mean(0, j);
  g.wo = matmul_tn(head_means, dpooled);
  const Matrix dmean = matmul_nt(dpooled, params.wo);  // n × h·d_v

  for (std::size_t b = 0; b < n; ++b) {
    const Matrix& x = batch.inputs[b];
    const SampleCache& sc = cache.samples[b];
    const std::size_t seq = x.rows();
    const double inv_l = 1.0 / static_cast<double>(seq);

    Matrix dq(seq, l.qk_width()), dk(seq, l.qk_width()), dv(seq, l.v_width());
    for (std::size_t h = 0; h < l.heads; ++h) {
      // Every row of the head output receives dmean/L.
      Matrix dhead(seq, l.d_v);
      for (std::size_t i = 0; i < seq; ++i)
        for (std::size_t j = 0; j < l.d_v; ++j) dhead(i, j) = dmean(b, h * l.d_v + j) * inv_l;

      const Matrix& a = sc.attn[h];
      const Matrix qh = column_block(sc.q, h * l.d_k, l.d_k);
      const Matrix kh = column_block(sc.k, h * l.d_k, l.d_k);
      const Matrix vh = column_block(sc.v, h * l.d_v, l.d_v);

      write_block(dv, matmul_tn(a, dhead), h * l.d_v);
      Matrix da = matmul_nt(dhead, vh);  // L × L
      // Softmax backward, row by row, folded with the 1/√d_k scale.
      for (std::size_t i = 0; i < seq; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < seq; ++j) dot += da(i, j) * a(i, j);
        for (std::size_t j = 0; j < seq; ++j) da(i, j) = a(i, j) * (da(i, j) - dot) * inv_sqrt_dk;
      }
      write_block(dq, matmul(da, kh), h * l.d_k);
      write_block(dk, matmul_tn(da, qh), h * l.d_k);
    }
    accumulate(g.wq, matmul_tn(x, dq));
    accumulate(g.wk, matmul_tn(x, dk));
    accumulate(g.wv, matmul_tn(x, dv));
  }
  return g;
}

// ---------------------------------------------------------------------------

void TaskSpec::validate() const {
  if (!(noise_std >= 0.0)) throw ParameterError("task: noise_std must be >= 0");
  if (batch_size < 1) throw ParameterError("task: batch_size must be >= 1");
  if (seq_len < 1) throw ParameterError("task: seq_len must be >= 1");
  if (input_rank < 1) throw ParameterError("task: input_rank must be >= 1");
  if (!(input_noise >= 0.0)) throw ParameterError("task: input_noise must be >= 0");
  if (!(input_decay > 0.0 && input_decay <= 1.0))
    throw ParameterError("task: input_decay must be in (0, 1]");
  if (!(head_perturbation >= 0.0)) throw ParameterError("task: head_perturbation must be >= 0");
}

BatchGenerator::BatchGenerator(ModelShape shape, TaskSpec spec, ModelParams teacher,
                               Matrix input_basis, std::uint64_t seed)
    : shape_(std::move(shape)),
      spec_(std::move(spec)),
      teacher_(std::move(teacher)),
      input_basis_(std::move(input_basis)),
      rng_(seed) {}

Batch BatchGenerator::next_inputs() {
  Batch batch;
  batch.inputs.reserve(spec_.batch_size);
  for (std::size_t b = 0; b < spec_.batch_size; ++b) {
    const Matrix z = rng_.gaussian(spec_.seq_len, input_basis_.cols());
    Matrix x = matmul_nt(z, input_basis_);
    if (spec_.input_noise > 0.0) x = add(x, rng_.gaussian(x.rows(), x.cols(), spec_.input_noise));
    batch.inputs.push_back(std::move(x));
  }
  batch.targets = Matrix(spec_.batch_size, shape_.out_dim);
  return batch;
}

Batch BatchGenerator::next() {
  Batch batch = next_inputs();
  Matrix y = forward(shape_, teacher_, batch).cache.outputs;
  if (spec_.noise_std > 0.0) y = add(y, rng_.gaussian(y.rows(), y.cols(), spec_.noise_std));
  batch.targets = std::move(y);
  return batch;
}

BatchGenerator Task::batches(std::uint64_t seed) const {
  return BatchGenerator(shape, spec, teacher, input_basis, seed);
}

Task make_task(const TaskSpec& spec, const ModelShape& shape, SeededRng& rng) {
  spec.validate();
  shape.validate();
  const HeadLayout& l = shape.layout;
  if (spec.input_rank > l.d_model) throw ParameterError("task: input_rank exceeds d_model");

  Task task{shape, spec, ModelParams::random(shape, rng), Matrix()};

  // Token embeddings live near a random input_rank-dimensional subspace.
  // Latent scales decay geometrically; entries have roughly unit variance.
  task.input_basis = qr_thin(rng.gaussian(l.d_model, spec.input_rank));
  {
    std::vector<double> w(spec.input_rank);
    double sq = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] = std::pow(spec.input_decay, static_cast<double>(j));
      sq += w[j] * w[j];
    }
    const double norm = std::sqrt(static_cast<double>(l.d_model) / sq);
    for (std::size_t i = 0; i < l.d_model; ++i)
      for (std::size_t j = 0; j < w.size(); ++j) task.input_basis(i, j) *= w[j] * norm;
  }

  // Shared-basis head blocks: basis (d_model×d) · mix_i + perturbation.
  auto structured = [&](std::size_t d) {
    const std::size_t width = std::min(d, l.d_model);
    const Matrix basis = qr_thin(rng.gaussian(l.d_model, width));
    std::vector<Matrix> blocks;
    blocks.reserve(l.heads);
    for (std::size_t h = 0; h < l.heads; ++h) {
      // Orthogonal mix keeps every direction of the block well above the noise.
      const Matrix mix = qr_thin(rng.gaussian(width, d));
      Matrix block = matmul(basis, mix);
      const double rms = frobenius_norm(block) / std::sqrt(static_cast<double>(block.size()));
      block = add(block, rng.gaussian(block.rows(), block.cols(), spec.head_perturbation * rms));
      blocks.push_back(std::move(block));
    }
    return hconcat(blocks);
  };
  task.teacher.wq = structured(l.d_k);
  task.teacher.wk = structured(l.d_k);
  task.teacher.wv = structured(l.d_v);

  // Unit-variance teacher outputs on a probe batch.
  TaskSpec probe_spec = spec;
  probe_spec.batch_size = 64;
  BatchGenerator probe(shape, probe_spec, task.teacher, task.input_basis, rng.next_u64());
  const Matrix y = forward(shape, task.teacher, probe.next_inputs()).cache.outputs;
  double mean = 0.0, sq = 0.0;
  for (double v : y.data()) mean += v;
  mean /= static_cast<double>(y.size());
  for (double v : y.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(y.size()));
  if (sd > 0.0) task.teacher.readout = scale(task.teacher.readout, 1.0 / sd);
  return task;
}

}  // namespace galore
