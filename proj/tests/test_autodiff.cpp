#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "framediff/autodiff.hpp"
#include "framediff/tensor.hpp"

using namespace framediff;
using ad::Tape;
using ad::Var;

namespace {

Tensor randn(std::int64_t r, std::int64_t c, std::mt19937_64& rng,
             double stddev = 1.0) {
  std::normal_distribution<double> gauss(0.0, stddev);
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = gauss(rng);
  return t;
}

// Builds loss(tensors) twice per perturbed entry and compares central
// differences against one analytic backward pass.
void check_grads(std::vector<Tensor> inputs,
                 const std::function<Var(Tape&, std::vector<Var>&)>& build,
                 double tol = 1e-6, double h = 1e-5) {
  std::vector<Tensor> grads;
  for (const auto& t : inputs) grads.emplace_back(t.rows(), t.cols());

  auto eval = [&](bool with_grad) {
    Tape tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      vars.push_back(tape.param(inputs[i], grads[i].data()));
    Var loss = build(tape, vars);
    const double v = tape.scalar(loss);
    if (with_grad) tape.backward(loss);
    return v;
  };

  for (auto& g : grads) g.fill(0.0);
  eval(true);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double orig = inputs[i].data()[e];
      inputs[i].data()[e] = orig + h;
      const double up = eval(false);
      inputs[i].data()[e] = orig - h;
      const double down = eval(false);
      inputs[i].data()[e] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads[i].data()[e];
      const double err = std::abs(fd - an) / (std::abs(fd) + std::abs(an) + 1e-8);
      INFO("input ", i, " entry ", e, " fd=", fd, " an=", an);
      CHECK(err < tol);
    }
  }
}

}  // namespace

TEST_CASE("elementwise, scale and matmul gradients") {
  std::mt19937_64 rng(1);
  check_grads({randn(3, 4, rng), randn(3, 4, rng)},
              [](Tape& t, std::vector<Var>& v) {
                Var s = t.add(t.mul(v[0], v[1]), t.scale(t.sub(v[0], v[1]), 0.7));
                return t.sum_all(t.mul(s, s));
              });
  check_grads({randn(3, 4, rng), randn(4, 5, rng)},
              [](Tape& t, std::vector<Var>& v) {
                Var m = t.matmul(v[0], v[1]);
                return t.sum_all(t.mul(m, m));
              });
  check_grads({randn(4, 3, rng), randn(4, 5, rng)},
              [](Tape& t, std::vector<Var>& v) {
                Var m = t.matmul_tn(v[0], v[1]);
                return t.sum_all(t.mul(m, m));
              });
  check_grads({randn(3, 4, rng), randn(5, 4, rng)},
              [](Tape& t, std::vector<Var>& v) {
                Var m = t.matmul_nt(v[0], v[1]);
                return t.sum_all(t.mul(m, m));
              });
}

TEST_CASE("scalar-variable broadcast gradients") {
  std::mt19937_64 rng(2);
  Tensor s(1, 1);
  s(0, 0) = 1.3;
  check_grads({randn(2, 3, rng), s}, [](Tape& t, std::vector<Var>& v) {
    Var a = t.mul_scalar_var(v[0], v[1]);
    Var b = t.div_by_scalar_var(v[0], v[1]);
    return t.sum_all(t.mul(t.add(a, b), t.add(a, b)));
  });
}

TEST_CASE("concat, slice and gather gradients") {
  std::mt19937_64 rng(3);
  check_grads({randn(3, 2, rng), randn(3, 4, rng)},
              [](Tape& t, std::vector<Var>& v) {
                std::vector<Var> parts{v[0], v[1]};
                Var cc = t.concat_cols(parts);
                Var sl = t.slice_cols(cc, 1, 5);
                std::vector<Var> rparts{sl, sl};
                Var rr = t.concat_rows(rparts);
                Var rs = t.slice_rows(rr, 2, 5);
                return t.sum_all(t.mul(rs, rs));
              });
  check_grads({randn(4, 3, rng)}, [](Tape& t, std::vector<Var>& v) {
    const int idx[] = {2, 0, 2, 3, 1};
    Var g = t.gather_rows(v[0], idx);
    return t.sum_all(t.mul(g, g));
  });
}

TEST_CASE("sorted reductions: gradients and order invariance") {
  std::mt19937_64 rng(4);
  check_grads({randn(6, 3, rng)}, [](Tape& t, std::vector<Var>& v) {
    const int seg[] = {1, 0, 1, 2, 0, 1};
    Var s = t.seg_sum_sorted(v[0], seg, 3);
    return t.sum_all(t.mul(s, s));
  });
  check_grads({randn(2, 2, rng), randn(2, 2, rng), randn(2, 2, rng)},
              [](Tape& t, std::vector<Var>& v) {
                std::vector<Var> parts{v[0], v[1], v[2]};
                Var m = t.mean_many_sorted(parts);
                return t.sum_all(t.mul(m, m));
              });

  // value-sorted accumulation: permuting rows within a segment leaves the
  // segment sum bit-identical
  Tensor a = randn(5, 4, rng);
  Tensor perm(5, 4);
  const int p[] = {3, 1, 0, 4, 2};  // all rows in one segment
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 4; ++c) perm(r, c) = a(p[r], c);
  Tape t1, t2;
  const int seg[] = {0, 0, 0, 0, 0};
  Var s1 = t1.seg_sum_sorted(t1.input(a), seg, 1);
  Var s2 = t2.seg_sum_sorted(t2.input(perm), seg, 1);
  for (int c = 0; c < 4; ++c) CHECK(t1.val(s1)(0, c) == t2.val(s2)(0, c));
}

TEST_CASE("activation and normalization gradients") {
  std::mt19937_64 rng(5);
  check_grads({randn(3, 5, rng)}, [](Tape& t, std::vector<Var>& v) {
    Var s = t.silu(v[0]);
    return t.sum_all(t.mul(s, s));
  });
  const Tensor wln = randn(3, 6, rng, 2.0);
  check_grads({randn(3, 6, rng)}, [&wln](Tape& t, std::vector<Var>& v) {
    Var ln = t.layer_norm_rows(v[0]);
    return t.sum_all(t.mul(ln, t.input(wln)));
  });
  const Tensor w = randn(3, 5, rng, 2.0);
  check_grads(
      {randn(3, 5, rng)},
      [&w](Tape& t, std::vector<Var>& v) {
        Var sm = t.softmax_rows(v[0]);
        return t.sum_all(t.mul(sm, t.input(w)));
      },
      1e-5);
}

TEST_CASE("broadcast op gradients") {
  std::mt19937_64 rng(6);
  check_grads({randn(4, 3, rng), randn(1, 3, rng), randn(4, 1, rng)},
              [](Tape& t, std::vector<Var>& v) {
                Var a = t.mul_row_bc(v[0], v[1]);
                Var b = t.add_row_bc(a, v[1]);
                Var c = t.mul_col_bc(b, v[2]);
                return t.sum_all(t.mul(c, c));
              });
}

TEST_CASE("geometry op gradients") {
  std::mt19937_64 rng(7);
  check_grads({randn(1, 3, rng), randn(1, 3, rng)},
              [](Tape& t, std::vector<Var>& v) {
                Var c = t.cross3(v[0], v[1]);
                return t.sum_all(t.mul(c, c));
              });
  check_grads({randn(5, 3, rng, 2.0)}, [](Tape& t, std::vector<Var>& v) {
    Var d = t.pdist(v[0]);
    return t.sum_all(t.mul(d, d));
  });
  Tensor w(1, 8);
  std::normal_distribution<double> gauss(0.0, 0.5);
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
  check_grads({randn(4, 3, rng, 1.5), w}, [](Tape& t, std::vector<Var>& v) {
    Var d = t.pdist(v[0]);
    Var b = t.rbf_bias(d, v[1], 0.6, 5.0);
    return t.sum_all(t.mul(b, b));
  });
  check_grads({randn(3, 3, rng)}, [](Tape& t, std::vector<Var>& v) {
    Var tr = t.trace3(v[0]);
    Var tt = t.transpose(v[0]);
    Var asym = t.sub(v[0], tt);
    return t.add(t.mul(tr, tr), t.sum_all(t.mul(asym, asym)));
  });
  check_grads({randn(6, 3, rng)}, [](Tape& t, std::vector<Var>& v) {
    const int live[] = {0, 1, 2, 4, 5};
    Var c = t.center_rows(v[0], live);
    return t.sum_all(t.mul(c, c));
  });
}

TEST_CASE("scalar math gradients") {
  std::mt19937_64 rng(8);
  Tensor y(1, 1), x(1, 1);
  y(0, 0) = 0.8;
  x(0, 0) = -0.4;
  check_grads({y, x}, [](Tape& t, std::vector<Var>& v) {
    Var a = t.atan2(v[0], v[1]);
    return t.mul(a, a);
  });
  Tensor pos = randn(2, 3, rng);
  for (std::size_t i = 0; i < pos.size(); ++i)
    pos.data()[i] = std::abs(pos.data()[i]) + 0.5;
  check_grads({pos}, [](Tape& t, std::vector<Var>& v) {
    Var s = t.sqrt(v[0]);
    return t.sum_all(t.mul(s, s));
  });
  check_grads({randn(2, 3, rng, 0.3)}, [](Tape& t, std::vector<Var>& v) {
    Var cl = t.clamp(v[0], -0.9, 0.9);
    Var ac = t.add_const(cl, 0.2);
    return t.sum_all(t.mul(ac, ac));
  });
}

TEST_CASE("channel op gradients") {
  std::mt19937_64 rng(9);
  check_grads({randn(4, 3, rng), randn(1, 5, rng)},
              [](Tape& t, std::vector<Var>& v) {
                Var ci = t.channel_init(v[0], v[1]);
                return t.sum_all(t.mul(ci, ci));
              });
  check_grads({randn(3, 12, rng), randn(4, 4, rng)},
              [](Tape& t, std::vector<Var>& v) {
                Var cm = t.channel_mix(v[0], v[1]);
                return t.sum_all(t.mul(cm, cm));
              });
  check_grads({randn(3, 4, rng)}, [](Tape& t, std::vector<Var>& v) {
    Var rc = t.repeat_cols(v[0], 3);
    Var q = t.sqnorm_groups(rc, 3);
    return t.sum_all(t.mul(q, q));
  });
}

TEST_CASE("tape reuse across resets gives identical results") {
  std::mt19937_64 rng(10);
  Tensor a = randn(3, 3, rng), b = randn(3, 3, rng);
  Tensor ga(3, 3), gb(3, 3);
  Tape tape;
  double first = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    tape.reset();
    ga.fill(0.0);
    gb.fill(0.0);
    Var va = tape.param(a, ga.data());
    Var vb = tape.param(b, gb.data());
    Var m = tape.matmul(va, vb);
    Var loss = tape.sum_all(tape.mul(m, m));
    tape.backward(loss);
    if (rep == 0)
      first = tape.scalar(loss);
    else
      CHECK(tape.scalar(loss) == first);
  }
}

TEST_CASE("quadratic loss gradient is exact") {
  Tensor theta(1, 4);
  for (int i = 0; i < 4; ++i) theta(0, i) = 0.3 * (i + 1);
  Tensor grad(1, 4);
  Tape tape;
  Var v = tape.param(theta, grad.data());
  Var loss = tape.sum_all(tape.mul(v, v));
  tape.backward(loss);
  for (int i = 0; i < 4; ++i)
    CHECK(grad(0, i) == doctest::Approx(2.0 * theta(0, i)).epsilon(1e-14));
}
