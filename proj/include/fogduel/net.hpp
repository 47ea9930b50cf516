#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fogduel/features.hpp"
#include "fogduel/sim.hpp"

namespace fogduel {

inline constexpr std::uint32_t kNetFormatVersion = 1;

struct NetShape {
  int input = kFeatureDim;
  int hidden = 64;  // encoder width
  int memory = 64;  // LSTM cell width
  int actions = kNumActions;

  std::size_t parameter_count() const;
  bool operator==(const NetShape&) const = default;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

// All weights live in one flat buffer, in this order (matrices column-major):
//   enc_w  [hidden x input]      enc_b  [hidden]
//   lstm_w [4*memory x (hidden + memory)]   lstm_b [4*memory]
//          gate row blocks: input, forget, cell, output;
//          column blocks: encoder output, previous h
//   val_w  [memory]              val_b  [1]
//   adv_w  [actions x memory]    adv_b  [actions]
// Gradients and optimizer moments reuse the same type.
class QNetParams {
 public:
  explicit QNetParams(NetShape shape = {});

  // Uniform in +-1/sqrt(fan_in) per layer.
  static QNetParams init_uniform(std::uint64_t seed, NetShape shape = {});

  const NetShape& shape() const { return shape_; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  MatrixMap enc_w();
  VectorMap enc_b();
  MatrixMap lstm_w();
  VectorMap lstm_b();
  VectorMap val_w();
  double& val_b();
  MatrixMap adv_w();
  VectorMap adv_b();

  ConstMatrixMap enc_w() const;
  ConstVectorMap enc_b() const;
  ConstMatrixMap lstm_w() const;
  ConstVectorMap lstm_b() const;
  ConstVectorMap val_w() const;
  double val_b() const;
  ConstMatrixMap adv_w() const;
  ConstVectorMap adv_b() const;

  void set_zero();
  bool all_finite() const;
  double squared_norm() const;

  bool operator==(const QNetParams& other) const;

 private:
  struct Offsets {
    std::size_t enc_w, enc_b, lstm_w, lstm_b, val_w, val_b, adv_w, adv_b, end;
  };
  static Offsets offsets_for(const NetShape& s);

  NetShape shape_;
  Offsets off_;
  // Fixed alignment keeps vectorized reductions, and so results, independent
  // of where the buffer lands on the heap.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

using Gradients = QNetParams;

struct HiddenState {
  std::vector<double> h;
  std::vector<double> c;

  static HiddenState zero(int memory);
  bool is_zero() const;
  bool operator==(const HiddenState&) const = default;
};

// kStateless runs the same cell from a zero state at every step: the
// network sees only the latest observation.
enum class Recurrence : std::uint8_t { kLstm = 0, kStateless = 1 };

// Deliberate defects for the mutation harness only.
enum class GradientFault : std::uint8_t { kNone = 0, kBrokenForgetGate = 1 };

// B sequences advanced in lockstep; inputs[t] is input x B.
struct SequenceBatch {
  std::vector<Matrix> inputs;
  Matrix h0;  // memory x B
  Matrix c0;
};

// Everything backward needs from a forward pass.
struct ForwardTrace {
  Recurrence recurrence = Recurrence::kLstm;
  Matrix h0, c0;
  std::vector<Matrix> x, enc_pre, enc;
  std::vector<Matrix> in_gate, forget_gate, cell_gate, out_gate;
  std::vector<Matrix> c, tanh_c, h;
  std::vector<Matrix> q;  // actions x B per step
};

ForwardTrace forward_batch(const QNetParams& params, const SequenceBatch& batch,
                           Recurrence recurrence = Recurrence::kLstm);

// Accumulates into `grads` (which must have the params' shape).
void backward_batch(const QNetParams& params, const ForwardTrace& trace,
                    std::span<const Matrix> dq, Gradients& grads,
                    GradientFault fault = GradientFault::kNone);

struct SequenceOutput {
  Matrix q;  // actions x T
  HiddenState final;
};

// Single sequence, columns of `seq` are time steps.
SequenceOutput forward(const QNetParams& params, const Matrix& seq,
                       const HiddenState& init,
                       Recurrence recurrence = Recurrence::kLstm);
SequenceOutput forward(const QNetParams& params,
                       std::span<const FeatureVector> seq,
                       const HiddenState& init,
                       Recurrence recurrence = Recurrence::kLstm);

Gradients backward(const QNetParams& params, const Matrix& seq,
                   const HiddenState& init, const Matrix& dq,
                   Recurrence recurrence = Recurrence::kLstm,
                   GradientFault fault = GradientFault::kNone);

// One decision step for an acting policy.
struct StepOutput {
  std::array<double, kNumActions> q{};
  HiddenState next;
};
StepOutput forward_step(const QNetParams& params, const FeatureVector& x,
                        const HiddenState& hidden,
                        Recurrence recurrence = Recurrence::kLstm);

Matrix features_to_matrix(std::span<const FeatureVector> seq);

// Compares backward against central differences (step 1e-5) on `probes`
// random coordinates. Coordinates whose perturbation flips a rectifier are
// redrawn, the derivative is undefined there.
double finite_diff_check(const QNetParams& params, const Matrix& seq,
                         const HiddenState& init, std::uint64_t probe_seed,
                         int probes = 256,
                         Recurrence recurrence = Recurrence::kLstm,
                         GradientFault fault = GradientFault::kNone);

// Global-norm clipping; returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

class SerializationError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kShapeMismatch };
  SerializationError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> serialize(const QNetParams& params);
// Throws SerializationError; never returns a partially loaded blob.
QNetParams deserialize(std::span<const std::uint8_t> blob,
                       const NetShape& expected = {});

}  // namespace fogduel
