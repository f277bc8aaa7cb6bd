#include <gtest/gtest.h>

#include <cmath>

#include "poisonlab/data.hpp"
#include "poisonlab/models.hpp"

using namespace poisonlab;

namespace {

Vector random_vec(Rng& rng, std::size_t n, double s = 1.0) {
  Vector v(n);
  for (double& x : v) x = s * rng.normal();
  return v;
}

// Central difference of f along each coordinate of `at`.
template <typename F>
Vector fd_grad(F&& f, Vector at, double h = 1e-6) {
  Vector g(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double keep = at[i];
    at[i] = keep + h;
    const double fp = f(at);
    at[i] = keep - h;
    const double fm = f(at);
    at[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

void expect_close(const Vector& a, const Vector& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_NEAR(a[i], b[i], tol * std::max(1.0, std::abs(b[i]))) << "index " << i;
}

std::vector<ModelSpec> all_specs() {
  return {ModelSpec::least_squares(4), ModelSpec::logistic(4), ModelSpec::softmax(4, 3), ModelSpec::mlp(4, 5, 3, 0.2)};
}

double label_for(const ModelSpec& spec, Rng& rng) {
  return spec.is_classifier() ? static_cast<double>(rng.below(spec.num_classes())) : rng.normal();
}

// mlp pre-activations must stay away from the kink for finite differences.
bool away_from_kinks(const ModelSpec& spec, const Params& p, const Vector& x) {
  if (spec.family != Family::mlp1) return true;
  for (int j = 0; j < spec.hidden; ++j)
    if (std::abs(dot(p.view().subspan(j * spec.input_dim, spec.input_dim), x)) < 1e-2) return false;
  return true;
}

}  // namespace

TEST(Models, ParamCounts) {
  EXPECT_EQ(ModelSpec::least_squares(3).num_params(), 3u);
  EXPECT_EQ(ModelSpec::logistic(3).num_params(), 3u);
  EXPECT_EQ(ModelSpec::softmax(3, 4).num_params(), 12u);
  EXPECT_EQ(ModelSpec::mlp(3, 5, 2).num_params(), 25u);
  EXPECT_EQ(ModelSpec::mlp(3, 5, 2).output_offset(), 15u);
  EXPECT_THROW(ModelSpec::mlp(3, 5, 2, 1.5).validate(), ConfigError);
  EXPECT_THROW(ModelSpec::softmax(3, 1).validate(), ConfigError);
}

TEST(Models, ShapeErrors) {
  const auto spec = ModelSpec::logistic(3);
  EXPECT_THROW(loss(spec, Params{{1, 2}}, Vector{1, 2, 3}, 0.0), ShapeError);
  EXPECT_THROW(loss(spec, Params{{1, 2, 3}}, Vector{1, 2}, 0.0), ShapeError);
}

TEST(Models, ParamGradMatchesFiniteDifference) {
  Rng rng(17);
  for (const auto& spec : all_specs()) {
    for (int trial = 0; trial < 100; ++trial) {
      Params p{random_vec(rng, spec.num_params(), 0.7)};
      const Vector x = random_vec(rng, spec.input_dim);
      if (!away_from_kinks(spec, p, x)) continue;
      const double y = label_for(spec, rng);
      const Vector g = param_grad(spec, p, x, y);
      const Vector fd = fd_grad([&](const Vector& w) { return loss(spec, Params{w}, x, y); }, p.values);
      expect_close(g, fd, 1e-6);
    }
  }
}

TEST(Models, MixedVjpMatchesFiniteDifference) {
  Rng rng(23);
  for (const auto& spec : all_specs()) {
    for (int trial = 0; trial < 100; ++trial) {
      Params p{random_vec(rng, spec.num_params(), 0.7)};
      const Vector x = random_vec(rng, spec.input_dim);
      if (!away_from_kinks(spec, p, x)) continue;
      const double y = label_for(spec, rng);
      const Vector v = random_vec(rng, spec.num_params());
      const Vector analytic = mixed_vjp(spec, p, x, y, v);
      const Vector fd = fd_grad([&](const Vector& xx) { return dot(param_grad(spec, p, xx, y), v); }, x);
      expect_close(analytic, fd, 1e-5);
    }
  }
}

TEST(Models, MixedVjpWithSoftLabels) {
  Rng rng(29);
  const auto spec = ModelSpec::softmax(3, 3);
  Params p{random_vec(rng, spec.num_params())};
  const Vector x = random_vec(rng, 3);
  const Vector q{0.2, 0.5, 0.3};
  const Vector v = random_vec(rng, spec.num_params());
  const Label lab{0.0, q};
  const Vector fd = fd_grad([&](const Vector& xx) { return dot(param_grad(spec, p, xx, lab), v); }, x);
  expect_close(mixed_vjp(spec, p, x, lab, v), fd, 1e-5);
}

TEST(Models, LabelVjpMatchesFiniteDifference) {
  Rng rng(31);
  for (const auto& spec : all_specs()) {
    Params p{random_vec(rng, spec.num_params(), 0.7)};
    const Vector x = random_vec(rng, spec.input_dim);
    if (!away_from_kinks(spec, p, x)) continue;
    const Vector v = random_vec(rng, spec.num_params());
    const Vector analytic = label_vjp(spec, p, x, v);
    Vector fd;
    if (spec.is_classifier()) {
      Vector q(spec.num_classes(), 1.0 / static_cast<double>(spec.num_classes()));
      fd = fd_grad([&](const Vector& qq) { return dot(param_grad(spec, p, x, Label{0.0, qq}), v); }, q);
    } else {
      fd = fd_grad([&](const Vector& yy) { return dot(param_grad(spec, p, x, yy[0]), v); }, Vector{0.3});
    }
    expect_close(analytic, fd, 1e-6);
  }
}

TEST(Models, LeastSquaresMixedVjpClosedForm) {
  // grad_x <(w.x - y) x, v> = (x.v) w + (w.x - y) v
  const auto spec = ModelSpec::least_squares(2);
  const Params w{{1.0, 2.0}};
  const Vector x{0.5, -1.0}, v{3.0, 1.0};
  const double y = 0.25;
  const double r = dot(w.values, x) - y, xv = dot(x, v);
  const Vector got = mixed_vjp(spec, w, x, y, v);
  EXPECT_NEAR(got[0], xv * 1.0 + r * 3.0, 1e-14);
  EXPECT_NEAR(got[1], xv * 2.0 + r * 1.0, 1e-14);
}

TEST(Models, OutputAlignmentEqualsParamInnerProduct) {
  Rng rng(37);
  for (const auto& spec : {ModelSpec::logistic(3), ModelSpec::least_squares(3), ModelSpec::softmax(3, 4)}) {
    Params p{random_vec(rng, spec.num_params())};
    const Vector x = random_vec(rng, 3);
    const double y = label_for(spec, rng);
    EXPECT_NEAR(output_alignment(spec, p, x, Label{y, {}}), dot(p.values, param_grad(spec, p, x, y)), 1e-12);
  }
}

TEST(Models, MlpAlignmentIsOutputBlock) {
  Rng rng(41);
  const auto spec = ModelSpec::mlp(3, 4, 2);
  Params p{random_vec(rng, spec.num_params())};
  const Vector x = random_vec(rng, 3);
  const Vector g = param_grad(spec, p, x, 1.0);
  double s = 0.0;
  for (std::size_t i = spec.output_offset(); i < p.size(); ++i) s += p[i] * g[i];
  EXPECT_NEAR(output_alignment(spec, p, x, Label{1.0, {}}), s, 1e-12);
}

TEST(Models, PredictTies) {
  EXPECT_EQ(predict(ModelSpec::logistic(2), Params{{0.0, 0.0}}, Vector{1.0, 1.0}), 0);
  EXPECT_EQ(predict(ModelSpec::logistic(2), Params{{1.0, 0.0}}, Vector{1e-9, 0.0}), 1);
  EXPECT_EQ(predict(ModelSpec::softmax(1, 3), Params{{2.0, 5.0, 5.0}}, Vector{1.0}), 1);
  EXPECT_THROW(predict(ModelSpec::least_squares(1), Params{{1.0}}, Vector{1.0}), DomainError);
}

TEST(Models, LogisticLossStable) {
  const auto spec = ModelSpec::logistic(1);
  EXPECT_NEAR(loss(spec, Params{{1000.0}}, Vector{1.0}, 1.0), 0.0, 1e-12);
  EXPECT_NEAR(loss(spec, Params{{1000.0}}, Vector{1.0}, 0.0), 1000.0, 1e-9);
  EXPECT_NEAR(loss(spec, Params{{0.0}}, Vector{1.0}, 1.0), std::log(2.0), 1e-15);
}

TEST(Models, SoftmaxBinaryAgreesWithLogistic) {
  // Logits (0, s) reproduce the binary model with score s.
  const Vector x{0.3, -1.2};
  const Params w{{0.7, 0.4}};
  const Params wm{{0.0, 0.7, 0.0, 0.4}};
  for (double y : {0.0, 1.0})
    EXPECT_NEAR(loss(ModelSpec::logistic(2), w, x, y), loss(ModelSpec::softmax(2, 2), wm, x, y), 1e-14);
}

TEST(Models, InitDeterministic) {
  const auto spec = ModelSpec::mlp(4, 8, 3);
  EXPECT_EQ(init_params(spec, 5), init_params(spec, 5));
  EXPECT_NE(init_params(spec, 5), init_params(spec, 6));
  EXPECT_EQ(init_params(ModelSpec::logistic(3), 1).values, Vector(3, 0.0));
}

TEST(Models, MeanGradAndAccuracy) {
  Dataset ds = gen_or(0, 1, 0.0);
  const auto spec = spec_for(Family::logistic_binary, ds);
  const Params w{{4.0, 4.0, -2.0}};
  EXPECT_EQ(accuracy(spec, w, ds), 1.0);
  Vector manual(3, 0.0);
  for (std::size_t i = 0; i < 4; ++i) axpy(0.25, param_grad(spec, w, ds.x.row(i), ds.y[i]), manual);
  expect_close(mean_param_grad(spec, w, ds), manual, 1e-15);
  EXPECT_THROW(mean_param_grad(spec, w, subset(ds, std::vector<std::size_t>{})), DataError);
}

TEST(Models, SpecExamples) {
  const auto ls = ModelSpec::least_squares(2);
  EXPECT_EQ(param_grad(ls, Params{{1, 0}}, Vector{2, 1}, 0.0), (Vector{4, 2}));
  EXPECT_EQ(mixed_vjp(ls, Params{{1, 0}}, Vector{2, 1}, 0.0, Vector{0, 1}), (Vector{1, 2}));
  EXPECT_EQ(mixed_vjp(ls, Params{{1, 0}}, Vector{2, 1}, 0.0, Vector{0, 0}), (Vector{0, 0}));
  const auto lg = ModelSpec::logistic(2);
  const Vector g = param_grad(lg, Params{{1, -1}}, Vector{0.5, 0.5}, 1.0);
  EXPECT_NEAR(g[0], -0.25, 1e-15);
  EXPECT_NEAR(g[1], -0.25, 1e-15);
  Dataset one = gen_or(0, 1, 0.0);
  one = subset(one, std::vector<std::size_t>{2});
  const auto sp3 = ModelSpec::logistic(3);
  const Params w3{{0.2, -0.4, 0.9}};
  EXPECT_EQ(mean_param_grad(sp3, w3, one), param_grad(sp3, w3, one.x.row(0), one.y[0]));
}

TEST(Models, ToyStationaryPoint) {
  const Dataset toy = gen_toy3();
  const auto spec = ModelSpec::logistic(2);
  const Vector g = mean_param_grad(spec, Params{{0.0, std::log(2.0)}}, toy);
  EXPECT_NEAR(g[0], 0.0, 1e-12);
  EXPECT_NEAR(g[1], 0.0, 1e-12);
  const Vector g2 = mean_param_grad(spec, Params{{0.0, 2 * std::log(2.0)}}, toy);
  EXPECT_NEAR(g2[0], 0.0, 1e-12);
  EXPECT_NEAR(g2[1], 2.0 / 15.0, 1e-12);
}

TEST(Models, OrAccuracyExamples) {
  const Dataset ds = gen_or(0, 1, 0.0);
  const auto spec = ModelSpec::logistic(3);
  EXPECT_EQ(accuracy(spec, Params{{1, 1, 0}}, ds), 1.0);
  EXPECT_EQ(accuracy(spec, Params{{-1, -1, 0}}, ds), 0.25);
  EXPECT_EQ(accuracy(spec, Params{{0, 0, 0}}, ds), 0.25);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(predict(spec, Params{{0, 0, 0}}, ds.x.row(i)), 0);
  EXPECT_THROW(accuracy(ModelSpec::least_squares(2), Params{{1, 1}}, gen_gauss_regression(0, 3, 2, Vector{1, 1}, 0)),
               DomainError);
}

TEST(Models, BilinearMixedCheck) {
  Rng rng(43);
  for (const auto& spec : all_specs()) {
    for (int trial = 0; trial < 20; ++trial) {
      Params p{random_vec(rng, spec.num_params(), 0.7)};
      const Vector x = random_vec(rng, spec.input_dim);
      if (!away_from_kinks(spec, p, x)) continue;
      const double y = label_for(spec, rng);
      const Vector u = random_vec(rng, spec.input_dim), v = random_vec(rng, spec.num_params());
      const double h = 1e-5;
      auto f = [&](double su, double sv) {
        Vector xx = x;
        axpy(su, u, xx);
        Params pp = p;
        axpy(sv, v, pp.values);
        return loss(spec, pp, xx, y);
      };
      const double fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
      const double analytic = dot(mixed_vjp(spec, p, x, y, v), u);
      EXPECT_NEAR(analytic, fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Models, CrossEntropyAlignmentBound) {
  Rng rng(47);
  for (int c : {2, 3, 10}) {
    const double bound = -lambert_w0(static_cast<double>(c - 1) * kInvE);
    const auto spec = ModelSpec::softmax(static_cast<std::size_t>(c), c);
    for (int t = 0; t < 20000; ++t) {
      // With W = I, the logits equal x.
      Params eye{Vector(static_cast<std::size_t>(c * c), 0.0)};
      for (int k = 0; k < c; ++k) eye[static_cast<std::size_t>(k * c + k)] = 1.0;
      const Vector h = random_vec(rng, static_cast<std::size_t>(c), 3.0);
      const double y = static_cast<double>(rng.below(static_cast<std::uint64_t>(c)));
      ASSERT_GE(output_alignment(spec, eye, h, Label{y, {}}), bound - 1e-9);
    }
  }
}

TEST(Models, ScalingPreservesPredictions) {
  Rng rng(53);
  for (const auto& spec : {ModelSpec::logistic(3), ModelSpec::softmax(3, 4)}) {
    for (int t = 0; t < 200; ++t) {
      Params p{random_vec(rng, spec.num_params())};
      const Vector x = random_vec(rng, 3);
      for (double s : {0.1, 0.5, 2.0, 7.0}) {
        Params q = p;
        for (double& v : q.values) v *= s;
        EXPECT_EQ(predict(spec, q, x), predict(spec, p, x));
      }
    }
  }
}
