#include "fogduel/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fogduel/bytes.hpp"

namespace fogduel {

namespace {

constexpr std::uint32_t kNetMagic = 0x4E514446;  // "FDQN"

Matrix sigmoid(const Matrix& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw ContractViolation(std::string("non-finite values in ") + what);
  }
}

}  // namespace

std::size_t NetShape::parameter_count() const {
  const std::size_t g = 4 * static_cast<std::size_t>(memory);
  return static_cast<std::size_t>(hidden) * input + hidden +
         g * (hidden + memory) + g + memory + 1 +
         static_cast<std::size_t>(actions) * memory + actions;
}

QNetParams::Offsets QNetParams::offsets_for(const NetShape& s) {
  Offsets o{};
  const std::size_t g = 4 * static_cast<std::size_t>(s.memory);
  o.enc_w = 0;
  o.enc_b = o.enc_w + static_cast<std::size_t>(s.hidden) * s.input;
  o.lstm_w = o.enc_b + s.hidden;
  o.lstm_b = o.lstm_w + g * (s.hidden + s.memory);
  o.val_w = o.lstm_b + g;
  o.val_b = o.val_w + s.memory;
  o.adv_w = o.val_b + 1;
  o.adv_b = o.adv_w + static_cast<std::size_t>(s.actions) * s.memory;
  o.end = o.adv_b + s.actions;
  return o;
}

QNetParams::QNetParams(NetShape shape)
    : shape_(shape), off_(offsets_for(shape)), data_(off_.end, 0.0) {
  if (shape.input <= 0 || shape.hidden <= 0 || shape.memory <= 0 ||
      shape.actions <= 0) {
    throw std::invalid_argument("network dimensions must be positive");
  }
}

QNetParams QNetParams::init_uniform(std::uint64_t seed, NetShape shape) {
  QNetParams p(shape);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](auto block, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in),
                                                 1.0 / std::sqrt(fan_in));
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = dist(rng);
  };
  fill(p.enc_w(), shape.input);
  fill(p.enc_b(), shape.input);
  fill(p.lstm_w(), shape.hidden + shape.memory);
  fill(p.lstm_b(), shape.hidden + shape.memory);
  fill(p.val_w(), shape.memory);
  std::uniform_real_distribution<double> head(-1.0 / std::sqrt(shape.memory),
                                              1.0 / std::sqrt(shape.memory));
  p.val_b() = head(rng);
  fill(p.adv_w(), shape.memory);
  fill(p.adv_b(), shape.memory);
  return p;
}

MatrixMap QNetParams::enc_w() {
  return {data_.data() + off_.enc_w, shape_.hidden, shape_.input};
}
VectorMap QNetParams::enc_b() { return {data_.data() + off_.enc_b, shape_.hidden}; }
MatrixMap QNetParams::lstm_w() {
  return {data_.data() + off_.lstm_w, 4 * shape_.memory,
          shape_.hidden + shape_.memory};
}
VectorMap QNetParams::lstm_b() {
  return {data_.data() + off_.lstm_b, 4 * shape_.memory};
}
VectorMap QNetParams::val_w() { return {data_.data() + off_.val_w, shape_.memory}; }
double& QNetParams::val_b() { return data_[off_.val_b]; }
MatrixMap QNetParams::adv_w() {
  return {data_.data() + off_.adv_w, shape_.actions, shape_.memory};
}
VectorMap QNetParams::adv_b() { return {data_.data() + off_.adv_b, shape_.actions}; }

ConstMatrixMap QNetParams::enc_w() const {
  return {data_.data() + off_.enc_w, shape_.hidden, shape_.input};
}
ConstVectorMap QNetParams::enc_b() const {
  return {data_.data() + off_.enc_b, shape_.hidden};
}
ConstMatrixMap QNetParams::lstm_w() const {
  return {data_.data() + off_.lstm_w, 4 * shape_.memory,
          shape_.hidden + shape_.memory};
}
ConstVectorMap QNetParams::lstm_b() const {
  return {data_.data() + off_.lstm_b, 4 * shape_.memory};
}
ConstVectorMap QNetParams::val_w() const {
  return {data_.data() + off_.val_w, shape_.memory};
}
double QNetParams::val_b() const { return data_[off_.val_b]; }
ConstMatrixMap QNetParams::adv_w() const {
  return {data_.data() + off_.adv_w, shape_.actions, shape_.memory};
}
ConstVectorMap QNetParams::adv_b() const {
  return {data_.data() + off_.adv_b, shape_.actions};
}

void QNetParams::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool QNetParams::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double QNetParams::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

bool QNetParams::operator==(const QNetParams& other) const {
  return shape_ == other.shape_ &&
         std::equal(data_.begin(), data_.end(), other.data_.begin(),
                    other.data_.end(), [](double a, double b) {
                      return std::memcmp(&a, &b, sizeof(double)) == 0;
                    });
}

HiddenState HiddenState::zero(int memory) {
  return {std::vector<double>(static_cast<std::size_t>(memory), 0.0),
          std::vector<double>(static_cast<std::size_t>(memory), 0.0)};
}

bool HiddenState::is_zero() const {
  auto zero = [](double v) { return v == 0.0; };
  return std::all_of(h.begin(), h.end(), zero) &&
         std::all_of(c.begin(), c.end(), zero);
}

ForwardTrace forward_batch(const QNetParams& params, const SequenceBatch& batch,
                           Recurrence recurrence) {
  const NetShape& s = params.shape();
  const Eigen::Index m = s.memory;
  const Eigen::Index b = batch.h0.cols();
  const std::size_t steps = batch.inputs.size();
  if (steps == 0) throw ContractViolation("forward on an empty sequence");
  if (batch.h0.rows() != m || batch.c0.rows() != m || batch.c0.cols() != b) {
    throw ContractViolation("hidden state shape does not match the network");
  }

  ForwardTrace tr;
  tr.recurrence = recurrence;
  tr.h0 = batch.h0;
  tr.c0 = batch.c0;
  for (auto* v : {&tr.x, &tr.enc_pre, &tr.enc, &tr.in_gate, &tr.forget_gate,
                  &tr.cell_gate, &tr.out_gate, &tr.c, &tr.tanh_c, &tr.h,
                  &tr.q}) {
    v->reserve(steps);
  }

  const auto enc_w = params.enc_w();
  const auto enc_b = params.enc_b();
  const auto lstm_w = params.lstm_w();
  const auto w_in = lstm_w.leftCols(s.hidden);
  const auto w_rec = lstm_w.rightCols(m);
  const auto lstm_b = params.lstm_b();
  const auto val_w = params.val_w();
  const auto adv_w = params.adv_w();
  const auto adv_b = params.adv_b();
  const Matrix zeros = Matrix::Zero(m, b);

  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix& x = batch.inputs[t];
    if (x.rows() != s.input || x.cols() != b) {
      throw ContractViolation("input step has the wrong shape");
    }
    require_finite(x, "network input");

    Matrix pre = enc_w * x;
    pre.colwise() += enc_b;
    Matrix enc = pre.cwiseMax(0.0);

    const bool stateless = recurrence == Recurrence::kStateless;
    const Matrix& h_prev = stateless ? zeros : (t == 0 ? batch.h0 : tr.h.back());
    const Matrix& c_prev = stateless ? zeros : (t == 0 ? batch.c0 : tr.c.back());

    Matrix z = w_in * enc;
    z.noalias() += w_rec * h_prev;
    z.colwise() += lstm_b;

    Matrix ig = sigmoid(z.topRows(m));
    Matrix fg = sigmoid(z.middleRows(m, m));
    Matrix gg = z.middleRows(2 * m, m).array().tanh().matrix();
    Matrix og = sigmoid(z.bottomRows(m));
    Matrix c = fg.cwiseProduct(c_prev) + ig.cwiseProduct(gg);
    Matrix tc = c.array().tanh().matrix();
    Matrix h = og.cwiseProduct(tc);

    Matrix adv = adv_w * h;
    adv.colwise() += adv_b;
    const Eigen::RowVectorXd value =
        (val_w.transpose() * h).array() + params.val_b();
    const Eigen::RowVectorXd adv_mean = adv.colwise().mean();
    Matrix q = adv;
    q.rowwise() += value - adv_mean;

    tr.x.push_back(x);
    tr.enc_pre.push_back(std::move(pre));
    tr.enc.push_back(std::move(enc));
    tr.in_gate.push_back(std::move(ig));
    tr.forget_gate.push_back(std::move(fg));
    tr.cell_gate.push_back(std::move(gg));
    tr.out_gate.push_back(std::move(og));
    tr.c.push_back(std::move(c));
    tr.tanh_c.push_back(std::move(tc));
    tr.h.push_back(std::move(h));
    tr.q.push_back(std::move(q));
  }
  return tr;
}

void backward_batch(const QNetParams& params, const ForwardTrace& tr,
                    std::span<const Matrix> dq, Gradients& g,
                    GradientFault fault) {
  const NetShape& s = params.shape();
  if (!(g.shape() == s)) throw ContractViolation("gradient shape mismatch");
  if (dq.size() != tr.q.size()) {
    throw ContractViolation("cotangent length does not match the forward pass");
  }
  const Eigen::Index m = s.memory;
  const Eigen::Index b = tr.h0.cols();
  const bool stateless = tr.recurrence == Recurrence::kStateless;

  const auto lstm_w = params.lstm_w();
  const auto w_in = lstm_w.leftCols(s.hidden);
  const auto w_rec = lstm_w.rightCols(m);
  const auto val_w = params.val_w();
  const auto adv_w = params.adv_w();

  auto g_enc_w = g.enc_w();
  auto g_enc_b = g.enc_b();
  auto g_lstm_w = g.lstm_w();
  auto g_lstm_b = g.lstm_b();
  auto g_val_w = g.val_w();
  auto g_adv_w = g.adv_w();
  auto g_adv_b = g.adv_b();

  Matrix dh_next = Matrix::Zero(m, b);
  Matrix dc_next = Matrix::Zero(m, b);
  const Matrix zeros = Matrix::Zero(m, b);
  Matrix dz(4 * m, b);

  for (std::size_t ti = tr.q.size(); ti-- > 0;) {
    const Matrix& dqt = dq[ti];
    if (dqt.rows() != s.actions || dqt.cols() != b) {
      throw ContractViolation("cotangent step has the wrong shape");
    }
    const Matrix& h = tr.h[ti];
    const Matrix& h_prev =
        stateless ? zeros : (ti == 0 ? tr.h0 : tr.h[ti - 1]);
    const Matrix& c_prev =
        stateless ? zeros : (ti == 0 ? tr.c0 : tr.c[ti - 1]);

    // Dueling head: q = V + A - mean(A).
    const Eigen::RowVectorXd dv = dqt.colwise().sum();
    Matrix dadv = dqt;
    dadv.rowwise() -= dqt.colwise().mean();

    g_val_w.noalias() += h * dv.transpose();
    g.val_b() += dv.sum();
    g_adv_w.noalias() += dadv * h.transpose();
    g_adv_b += dadv.rowwise().sum();

    Matrix dh = val_w * dv;
    dh.noalias() += adv_w.transpose() * dadv;
    if (!stateless) dh += dh_next;

    const Matrix& ig = tr.in_gate[ti];
    const Matrix& fg = tr.forget_gate[ti];
    const Matrix& gg = tr.cell_gate[ti];
    const Matrix& og = tr.out_gate[ti];
    const Matrix& tc = tr.tanh_c[ti];

    const Matrix d_out = dh.cwiseProduct(tc);
    Matrix dc = dh.cwiseProduct(og).cwiseProduct(
        (1.0 - tc.array().square()).matrix());
    if (!stateless) dc += dc_next;

    const Matrix d_in = dc.cwiseProduct(gg);
    const Matrix d_cell = dc.cwiseProduct(ig);
    const Matrix d_forget = fault == GradientFault::kBrokenForgetGate
                                ? dc.cwiseProduct(tr.c[ti])
                                : dc.cwiseProduct(c_prev);

    dz.topRows(m) =
        d_in.array() * ig.array() * (1.0 - ig.array());
    dz.middleRows(m, m) =
        d_forget.array() * fg.array() * (1.0 - fg.array());
    dz.middleRows(2 * m, m) = d_cell.array() * (1.0 - gg.array().square());
    dz.bottomRows(m) = d_out.array() * og.array() * (1.0 - og.array());

    g_lstm_w.leftCols(s.hidden).noalias() += dz * tr.enc[ti].transpose();
    if (!stateless) g_lstm_w.rightCols(m).noalias() += dz * h_prev.transpose();
    g_lstm_b += dz.rowwise().sum();

    Matrix d_enc = w_in.transpose() * dz;
    d_enc.array() *= (tr.enc_pre[ti].array() > 0.0).cast<double>();
    g_enc_w.noalias() += d_enc * tr.x[ti].transpose();
    g_enc_b += d_enc.rowwise().sum();

    if (!stateless) {
      dh_next.noalias() = w_rec.transpose() * dz;
      dc_next = dc.cwiseProduct(fg);
    }
  }
}

Matrix features_to_matrix(std::span<const FeatureVector> seq) {
  Matrix m(kFeatureDim, static_cast<Eigen::Index>(seq.size()));
  for (std::size_t t = 0; t < seq.size(); ++t) {
    for (int i = 0; i < kFeatureDim; ++i) {
      m(i, static_cast<Eigen::Index>(t)) = seq[t][static_cast<std::size_t>(i)];
    }
  }
  return m;
}

namespace {

SequenceBatch single_batch(const QNetParams& params, const Matrix& seq,
                           const HiddenState& init) {
  const int m = params.shape().memory;
  if (static_cast<int>(init.h.size()) != m ||
      static_cast<int>(init.c.size()) != m) {
    throw ContractViolation("hidden state width does not match the network");
  }
  SequenceBatch batch;
  batch.inputs.reserve(static_cast<std::size_t>(seq.cols()));
  for (Eigen::Index t = 0; t < seq.cols(); ++t) batch.inputs.push_back(seq.col(t));
  batch.h0 = ConstVectorMap(init.h.data(), m);
  batch.c0 = ConstVectorMap(init.c.data(), m);
  return batch;
}

HiddenState to_hidden(const Matrix& h, const Matrix& c) {
  HiddenState out;
  out.h.assign(h.data(), h.data() + h.size());
  out.c.assign(c.data(), c.data() + c.size());
  return out;
}

}  // namespace

SequenceOutput forward(const QNetParams& params, const Matrix& seq,
                       const HiddenState& init, Recurrence recurrence) {
  if (seq.rows() != params.shape().input) {
    throw ContractViolation("sequence width does not match the network input");
  }
  const ForwardTrace tr =
      forward_batch(params, single_batch(params, seq, init), recurrence);
  SequenceOutput out;
  out.q.resize(params.shape().actions, seq.cols());
  for (std::size_t t = 0; t < tr.q.size(); ++t) {
    out.q.col(static_cast<Eigen::Index>(t)) = tr.q[t].col(0);
  }
  out.final = to_hidden(tr.h.back(), tr.c.back());
  return out;
}

SequenceOutput forward(const QNetParams& params,
                       std::span<const FeatureVector> seq,
                       const HiddenState& init, Recurrence recurrence) {
  return forward(params, features_to_matrix(seq), init, recurrence);
}

Gradients backward(const QNetParams& params, const Matrix& seq,
                   const HiddenState& init, const Matrix& dq,
                   Recurrence recurrence, GradientFault fault) {
  const ForwardTrace tr =
      forward_batch(params, single_batch(params, seq, init), recurrence);
  std::vector<Matrix> cot;
  cot.reserve(static_cast<std::size_t>(dq.cols()));
  for (Eigen::Index t = 0; t < dq.cols(); ++t) cot.push_back(dq.col(t));
  Gradients g(params.shape());
  backward_batch(params, tr, cot, g, fault);
  return g;
}

StepOutput forward_step(const QNetParams& params, const FeatureVector& x,
                        const HiddenState& hidden, Recurrence recurrence) {
  if (params.shape().actions != kNumActions) {
    throw ContractViolation("acting network must have one output per macro action");
  }
  const Matrix seq = features_to_matrix(std::span<const FeatureVector>(&x, 1));
  SequenceOutput out = forward(params, seq, hidden, recurrence);
  StepOutput step;
  for (int a = 0; a < kNumActions; ++a) step.q[static_cast<std::size_t>(a)] = out.q(a, 0);
  step.next = std::move(out.final);
  return step;
}

double finite_diff_check(const QNetParams& params, const Matrix& seq,
                         const HiddenState& init, std::uint64_t probe_seed,
                         int probes, Recurrence recurrence,
                         GradientFault fault) {
  constexpr double kStep = 1e-5;
  // Gradients smaller than this are compared in absolute terms.
  constexpr double kScaleFloor = 1e-5;

  std::mt19937_64 rng(probe_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix cot(params.shape().actions, seq.cols());
  for (Eigen::Index i = 0; i < cot.size(); ++i) cot.data()[i] = unit(rng);

  const Gradients analytic =
      backward(params, seq, init, cot, recurrence, fault);

  QNetParams probe = params;
  auto loss_and_pattern = [&](std::vector<bool>& pattern) {
    const ForwardTrace tr =
        forward_batch(probe, single_batch(probe, seq, init), recurrence);
    double loss = 0.0;
    pattern.clear();
    for (std::size_t t = 0; t < tr.q.size(); ++t) {
      loss += tr.q[t].col(0).dot(cot.col(static_cast<Eigen::Index>(t)));
      for (Eigen::Index j = 0; j < tr.enc_pre[t].size(); ++j) {
        pattern.push_back(tr.enc_pre[t].data()[j] > 0.0);
      }
    }
    return loss;
  };

  const auto n = static_cast<std::uint64_t>(params.values().size());
  double worst = 0.0;
  std::vector<bool> plus_pattern, minus_pattern;
  int accepted = 0;
  for (int attempt = 0; accepted < probes && attempt < 20 * probes; ++attempt) {
    const std::size_t k = static_cast<std::size_t>(rng() % n);
    const double original = probe.values()[k];
    probe.values()[k] = original + kStep;
    const double up = loss_and_pattern(plus_pattern);
    probe.values()[k] = original - kStep;
    const double down = loss_and_pattern(minus_pattern);
    probe.values()[k] = original;
    if (plus_pattern != minus_pattern) continue;
    ++accepted;

    const double numeric = (up - down) / (2.0 * kStep);
    const double exact = analytic.values()[k];
    const double scale =
        std::max({std::abs(numeric), std::abs(exact), kScaleFloor});
    worst = std::max(worst, std::abs(numeric - exact) / scale);
  }
  return worst;
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& v : grads.values()) v *= scale;
  }
  return norm;
}

std::vector<std::uint8_t> serialize(const QNetParams& params) {
  const NetShape& s = params.shape();
  ByteWriter w;
  w.put<std::uint32_t>(kNetMagic);
  w.put<std::uint32_t>(kNetFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.input));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.hidden));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.memory));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.actions));
  w.put<std::uint64_t>(params.values().size());
  w.put_doubles(params.values());
  return w.release();
}

QNetParams deserialize(std::span<const std::uint8_t> blob,
                       const NetShape& expected) {
  using Kind = SerializationError::Kind;
  ByteReader r(blob);
  try {
    if (r.get<std::uint32_t>() != kNetMagic) {
      throw SerializationError(Kind::kBadMagic, "not a network parameter blob");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kNetFormatVersion) {
      throw SerializationError(Kind::kVersionMismatch,
                               "unsupported network format version " +
                                   std::to_string(version));
    }
    NetShape shape;
    shape.input = static_cast<int>(r.get<std::uint32_t>());
    shape.hidden = static_cast<int>(r.get<std::uint32_t>());
    shape.memory = static_cast<int>(r.get<std::uint32_t>());
    shape.actions = static_cast<int>(r.get<std::uint32_t>());
    if (!(shape == expected)) {
      throw SerializationError(
          Kind::kVersionMismatch,
          "network layout (" + std::to_string(shape.input) + "," +
              std::to_string(shape.hidden) + "," + std::to_string(shape.memory) +
              "," + std::to_string(shape.actions) + ") does not match (" +
              std::to_string(expected.input) + "," +
              std::to_string(expected.hidden) + "," +
              std::to_string(expected.memory) + "," +
              std::to_string(expected.actions) + ")");
    }
    const auto count = r.get<std::uint64_t>();
    if (count != expected.parameter_count() || r.remaining() != count * 8) {
      throw SerializationError(Kind::kShapeMismatch,
                               "parameter payload has the wrong size");
    }
    QNetParams params(shape);
    r.get_doubles(params.values());
    return params;
  } catch (const TruncatedInput& e) {
    throw SerializationError(Kind::kShapeMismatch,
                             std::string("truncated parameter blob: ") + e.what());
  }
}

}  // namespace fogduel
