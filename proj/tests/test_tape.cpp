#include "graphdiff/tape.hpp"

#include <gtest/gtest.h>

#include "graphdiff/rng.hpp"

using namespace graphdiff;
using Tape64 = Tape<double>;
using Var = Tape64::Var;
using Mat = Eigen::MatrixXd;

namespace {

Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Central-difference check of d(loss)/d(leaf) for every entry of every leaf.
// `build` maps leaf values to a scalar loss on a fresh tape.
void check_gradients(std::vector<Mat> leaves,
                     const std::function<Var(Tape64&, const std::vector<Var>&)>& build,
                     double tol = 1e-6) {
  Tape64 tape;
  std::vector<Var> vars;
  for (const auto& m : leaves) vars.push_back(tape.leaf(m, /*requires_grad=*/true));
  Var loss = build(tape, vars);
  tape.backward(loss);

  auto eval = [&](const std::vector<Mat>& vals) {
    Tape64 t;
    std::vector<Var> vs;
    for (const auto& m : vals) vs.push_back(t.leaf(m, true));
    return t.val(build(t, vs))(0, 0);
  };

  const double eps = 1e-6;
  for (size_t l = 0; l < leaves.size(); ++l) {
    const Mat analytic = tape.grad_or_zero(vars[l]);
    for (int i = 0; i < leaves[l].rows(); ++i)
      for (int j = 0; j < leaves[l].cols(); ++j) {
        auto plus = leaves, minus = leaves;
        plus[l](i, j) += eps;
        minus[l](i, j) -= eps;
        const double fd = (eval(plus) - eval(minus)) / (2 * eps);
        EXPECT_NEAR(analytic(i, j), fd, tol * std::max(1.0, std::abs(fd)))
            << "leaf " << l << " entry (" << i << "," << j << ")";
      }
  }
}

Var squared_sum(Tape64& t, Var v) { return t.sum_all(t.cmul(v, v)); }

}  // namespace

TEST(Tape, MatmulGradient) {
  Rng rng(1);
  check_gradients({random_mat(3, 4, rng), random_mat(4, 2, rng)},
                  [](Tape64& t, const std::vector<Var>& v) {
                    return squared_sum(t, t.matmul(v[0], v[1]));
                  });
}

TEST(Tape, AddAndScaleGradient) {
  Rng rng(2);
  check_gradients({random_mat(3, 3, rng), random_mat(3, 3, rng)},
                  [](Tape64& t, const std::vector<Var>& v) {
                    return squared_sum(t, t.add(t.scale(v[0], 1.7), v[1]));
                  });
}

TEST(Tape, AddRowvecGradient) {
  Rng rng(3);
  check_gradients({random_mat(4, 3, rng), random_mat(1, 3, rng)},
                  [](Tape64& t, const std::vector<Var>& v) {
                    return squared_sum(t, t.add_rowvec(v[0], v[1]));
                  });
}

TEST(Tape, CmulGradient) {
  Rng rng(4);
  check_gradients({random_mat(3, 5, rng), random_mat(3, 5, rng)},
                  [](Tape64& t, const std::vector<Var>& v) {
                    return squared_sum(t, t.cmul(v[0], v[1]));
                  });
}

TEST(Tape, SiluGradient) {
  Rng rng(5);
  check_gradients({random_mat(4, 4, rng, 2.0)}, [](Tape64& t, const std::vector<Var>& v) {
    return squared_sum(t, t.silu(v[0]));
  });
}

TEST(Tape, LayernormGradient) {
  Rng rng(6);
  check_gradients(
      {random_mat(5, 6, rng), random_mat(1, 6, rng), random_mat(1, 6, rng)},
      [](Tape64& t, const std::vector<Var>& v) {
        return squared_sum(t, t.layernorm(v[0], v[1], v[2]));
      },
      1e-5);
}

TEST(Tape, GatherSegmentSumGradient) {
  Rng rng(7);
  const std::vector<int> idx = {2, 0, 1, 2, 2};
  const std::vector<int> seg = {0, 0, 1, 2, 1};
  check_gradients({random_mat(3, 4, rng)}, [&](Tape64& t, const std::vector<Var>& v) {
    Var g = t.gather_rows(v[0], idx);
    Var s = t.segment_sum(g, seg, 3);
    return squared_sum(t, s);
  });
}

TEST(Tape, ConcatColsGradient) {
  Rng rng(8);
  check_gradients({random_mat(3, 2, rng), random_mat(3, 4, rng)},
                  [](Tape64& t, const std::vector<Var>& v) {
                    return squared_sum(t, t.concat_cols(v[0], v[1]));
                  });
}

TEST(Tape, HeadOpsGradient) {
  Rng rng(9);
  // 2 heads of width 3
  check_gradients({random_mat(5, 6, rng), random_mat(5, 6, rng)},
                  [](Tape64& t, const std::vector<Var>& v) {
                    Var d = t.head_dot(v[0], v[1], 2);           // 5 x 2
                    Var m = t.mul_headwise(v[0], d, 2);          // 5 x 6
                    Var h = t.head_mean(m, 2);                   // 5 x 2
                    Var s = t.sum_headchunks(t.mul_headwise(v[1], h, 2), 2);  // 5 x 3
                    return squared_sum(t, s);
                  },
                  1e-5);
}

TEST(Tape, SegmentSoftmaxGradient) {
  Rng rng(10);
  // 6 pair rows over 3 segments; segment 2 fully masked (empty neighborhood)
  const std::vector<int> seg = {0, 0, 0, 1, 1, 2};
  const std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1, 0};
  const Mat w = random_mat(6, 2, rng);
  check_gradients({random_mat(6, 2, rng)}, [&](Tape64& t, const std::vector<Var>& v) {
    Var a = t.segment_softmax(v[0], seg, mask, 3);
    return t.sum_all(t.cmul(a, t.cmul(a, t.leaf(w))));
  });
}

TEST(Tape, SegmentSoftmaxValues) {
  Tape64 t;
  Mat logits(4, 1);
  logits << 1.0, 1.0, 5.0, -2.0;
  const std::vector<int> seg = {0, 0, 1, 1};
  const std::vector<std::uint8_t> mask = {1, 1, 1, 0};
  Var a = t.segment_softmax(t.leaf(logits), seg, mask, 2);
  const Mat& av = t.val(a);
  EXPECT_NEAR(av(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(av(1, 0), 0.5, 1e-12);
  EXPECT_NEAR(av(2, 0), 1.0, 1e-12);  // softmax of a singleton
  EXPECT_DOUBLE_EQ(av(3, 0), 0.0);    // masked row
}

TEST(Tape, TransposeAndPairsToSquareGradient) {
  Rng rng(11);
  check_gradients({random_mat(9, 1, rng)}, [](Tape64& t, const std::vector<Var>& v) {
    Var sq = t.pairs_to_square(v[0], 3);
    Var sym = t.scale(t.add(sq, t.transpose(sq)), 0.5);
    return squared_sum(t, sym);
  });
}

TEST(Tape, LeafRefSharesStorageAndAccumulatesGrad) {
  Mat w(2, 2);
  w << 1, 2, 3, 4;
  Tape64 t;
  Var v = t.leaf_ref(w, true);
  Var loss = squared_sum(t, v);
  EXPECT_DOUBLE_EQ(t.val(loss)(0, 0), 1 + 4 + 9 + 16);
  t.backward(loss);
  const Mat g = t.grad_or_zero(v);
  EXPECT_DOUBLE_EQ(g(1, 1), 8.0);  // d/dw sum(w^2) = 2w
}

TEST(Tape, NoGradTapeSkipsBackward) {
  Tape64 t(/*grad_enabled=*/false);
  Var v = t.leaf(Mat::Ones(2, 2), true);
  Var loss = squared_sum(t, v);
  EXPECT_DOUBLE_EQ(t.val(loss)(0, 0), 4.0);
  EXPECT_THROW(t.backward(loss), std::logic_error);
}
