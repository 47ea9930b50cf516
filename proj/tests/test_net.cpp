#include <random>

#include "doctest.h"
#include "fogduel/net.hpp"

using namespace fogduel;

namespace {

Matrix random_sequence(std::mt19937_64& rng, int dim, int steps) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(dim, steps);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

HiddenState random_hidden(std::mt19937_64& rng, int memory) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  HiddenState s = HiddenState::zero(memory);
  for (auto& v : s.h) v = u(rng);
  for (auto& v : s.c) v = 2.0 * u(rng);
  return s;
}

}  // namespace

TEST_CASE("zero network outputs zero") {
  QNetParams p;
  std::mt19937_64 rng(1);
  const auto out = forward(p, random_sequence(rng, kFeatureDim, 5),
                           HiddenState::zero(64));
  CHECK(out.q.isZero(0.0));
}

TEST_CASE("dueling aggregation ignores a shared advantage offset") {
  std::mt19937_64 rng(2);
  QNetParams p = QNetParams::init_uniform(3);
  const Matrix seq = random_sequence(rng, kFeatureDim, 6);
  const auto base = forward(p, seq, HiddenState::zero(64));
  for (double shift : {-3.0, 0.5, 17.0}) {
    QNetParams shifted = p;
    shifted.adv_b().array() += shift;
    const auto out = forward(shifted, seq, HiddenState::zero(64));
    CHECK((out.q - base.q).cwiseAbs().maxCoeff() < 1e-12);
    for (Eigen::Index t = 0; t < seq.cols(); ++t) {
      Eigen::Index a0, a1;
      base.q.col(t).maxCoeff(&a0);
      out.q.col(t).maxCoeff(&a1);
      CHECK(a0 == a1);
    }
  }
}

TEST_CASE("recurrence composes exactly at every split point") {
  std::mt19937_64 rng(4);
  const QNetParams p = QNetParams::init_uniform(5);
  const Matrix seq = random_sequence(rng, kFeatureDim, 9);
  const HiddenState init = random_hidden(rng, 64);
  const auto whole = forward(p, seq, init);
  for (Eigen::Index split = 1; split < seq.cols(); ++split) {
    const auto head = forward(p, Matrix(seq.leftCols(split)), init);
    const auto tail =
        forward(p, Matrix(seq.rightCols(seq.cols() - split)), head.final);
    CHECK(Matrix(whole.q.rightCols(seq.cols() - split)) == tail.q);
    CHECK(tail.final == whole.final);
  }
}

TEST_CASE("stepwise acting matches the sequence pass") {
  std::mt19937_64 rng(6);
  const QNetParams p = QNetParams::init_uniform(7);
  std::vector<FeatureVector> seq(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& f : seq) for (auto& v : f) v = u(rng);
  const auto whole = forward(p, seq, HiddenState::zero(64));
  HiddenState h = HiddenState::zero(64);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto step = forward_step(p, seq[t], h);
    for (int a = 0; a < kNumActions; ++a) {
      CHECK(step.q[a] == whole.q(a, static_cast<Eigen::Index>(t)));
    }
    h = step.next;
  }
  CHECK(h == whole.final);
}

TEST_CASE("stateless mode sees only the latest observation") {
  std::mt19937_64 rng(8);
  const QNetParams p = QNetParams::init_uniform(9);
  const Matrix seq = random_sequence(rng, kFeatureDim, 4);
  const auto full = forward(p, seq, random_hidden(rng, 64), Recurrence::kStateless);
  const auto last = forward(p, Matrix(seq.rightCols(1)), HiddenState::zero(64),
                            Recurrence::kStateless);
  CHECK(Matrix(full.q.rightCols(1)) == last.q);
}

TEST_CASE("non-finite input is rejected") {
  const QNetParams p = QNetParams::init_uniform(1);
  Matrix seq = Matrix::Zero(kFeatureDim, 2);
  seq(3, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(p, seq, HiddenState::zero(64)), ContractViolation);
}

TEST_CASE("zero cotangent gives zero gradients") {
  std::mt19937_64 rng(10);
  const QNetParams p = QNetParams::init_uniform(11);
  const Matrix seq = random_sequence(rng, kFeatureDim, 5);
  const Gradients g =
      backward(p, seq, HiddenState::zero(64), Matrix::Zero(kNumActions, 5));
  CHECK(g.squared_norm() == 0.0);
}

TEST_CASE("value bias gradient is the total cotangent") {
  std::mt19937_64 rng(12);
  const QNetParams p = QNetParams::init_uniform(13);
  const Matrix seq = random_sequence(rng, kFeatureDim, 6);
  const Matrix dq = random_sequence(rng, kNumActions, 6).array() - 0.5;
  const Gradients g = backward(p, seq, random_hidden(rng, 64), dq);
  CHECK(g.val_b() == doctest::Approx(dq.sum()).epsilon(1e-12));
}

TEST_CASE("finite differences agree with backpropagation") {
  std::mt19937_64 rng(14);
  for (int instance = 0; instance < 6; ++instance) {
    const QNetParams p = QNetParams::init_uniform(100 + instance);
    const int steps = 1 + instance;
    const Matrix seq = random_sequence(rng, kFeatureDim, steps);
    const HiddenState init = random_hidden(rng, 64);
    CHECK(finite_diff_check(p, seq, init, 500 + instance, 200) < 1e-4);
    CHECK(finite_diff_check(p, seq, init, 600 + instance, 200,
                            Recurrence::kStateless) < 1e-4);
  }
}

TEST_CASE("finite differences catch a broken forget-gate gradient") {
  std::mt19937_64 rng(15);
  const QNetParams p = QNetParams::init_uniform(16);
  const Matrix seq = random_sequence(rng, kFeatureDim, 6);
  const HiddenState init = random_hidden(rng, 64);
  CHECK(finite_diff_check(p, seq, init, 17, 200, Recurrence::kLstm,
                          GradientFault::kBrokenForgetGate) > 1e-2);
}

TEST_CASE("finite difference check on the zero network is exact") {
  const QNetParams p;
  const Matrix seq = Matrix::Zero(kFeatureDim, 3);
  CHECK(finite_diff_check(p, seq, HiddenState::zero(64), 1, 200) == 0.0);
}

TEST_CASE("global norm clipping") {
  QNetParams g(NetShape{2, 2, 2, 2});
  g.values()[0] = 30.0;
  g.values()[1] = 40.0;
  CHECK(clip_global_norm(g, 40.0) == doctest::Approx(50.0));
  CHECK(std::sqrt(g.squared_norm()) == doctest::Approx(40.0));
  CHECK(clip_global_norm(g, 100.0) == doctest::Approx(40.0));
}

TEST_CASE("parameter blobs round-trip bit-exactly") {
  const QNetParams p = QNetParams::init_uniform(21);
  const auto blob = serialize(p);
  CHECK(deserialize(blob) == p);
}

TEST_CASE("truncated blob is a shape mismatch") {
  const auto blob = serialize(QNetParams::init_uniform(22));
  const std::vector<std::uint8_t> cut(blob.begin(), blob.end() - 9);
  try {
    deserialize(cut);
    FAIL("expected an error");
  } catch (const SerializationError& e) {
    CHECK(e.kind() == SerializationError::Kind::kShapeMismatch);
  }
  const std::vector<std::uint8_t> header_only(blob.begin(), blob.begin() + 10);
  CHECK_THROWS_AS(deserialize(header_only), SerializationError);
}

TEST_CASE("blob from a different input width is a version error") {
  NetShape other;
  other.input = 12;
  const auto blob = serialize(QNetParams::init_uniform(23, other));
  try {
    deserialize(blob);
    FAIL("expected an error");
  } catch (const SerializationError& e) {
    CHECK(e.kind() == SerializationError::Kind::kVersionMismatch);
  }
  std::vector<std::uint8_t> junk(blob);
  junk[0] ^= 0xFF;
  try {
    deserialize(junk);
    FAIL("expected an error");
  } catch (const SerializationError& e) {
    CHECK(e.kind() == SerializationError::Kind::kBadMagic);
  }
}
