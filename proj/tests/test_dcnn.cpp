#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <random>

#include "foveate/dcnn.hpp"
#include "foveate/error.hpp"
#include "support.hpp"

using namespace foveate;
using namespace foveate::dcnn;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = testing::uniform(rng, lo, hi);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Central difference of `loss` with respect to every entry of `x`.
std::vector<double> numeric_gradient(std::vector<double>& x, const std::function<double()>& loss, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Relative error with a small absolute floor so that entries which are zero
// analytically (dead ReLUs) compare against rounding noise sensibly.
double max_relative_error(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(n[i]), floor});
    worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
  }
  return worst;
}

// Hand-rolled shape/count oracle: same padding keeps the map, valid padding
// trims kernel-1, each 2x2 pool floors, dense layers are in*out + out.
struct OracleTrace {
  int rows, cols, channels;
  std::size_t params;
};

OracleTrace shape_oracle(int rows, int cols, int channels, const std::vector<int>& filters,
                         const std::vector<int>& fc, int classes, bool same) {
  std::size_t params = 0;
  for (int f : filters) {
    params += static_cast<std::size_t>(9 * channels * f + f);
    if (!same) {
      rows -= 2;
      cols -= 2;
    }
    rows /= 2;
    cols /= 2;
    channels = f;
  }
  std::size_t width = static_cast<std::size_t>(rows) * cols * channels;
  for (int w : fc) {
    params += width * w + w;
    width = w;
  }
  params += width * classes + classes;
  return {rows, cols, channels, params};
}

Tensor<double> random_batch(std::size_t n, Shape3 s, std::mt19937_64& rng) {
  Tensor<double> t({n, static_cast<std::size_t>(s.rows), static_cast<std::size_t>(s.cols),
                    static_cast<std::size_t>(s.channels)});
  for (double& v : t.data) v = testing::uniform(rng, 0.0, 1.0);
  return t;
}

Dataset toy_dataset(std::size_t per_class, int classes, Shape3 shape, std::uint64_t seed) {
  Dataset d;
  d.shape = shape;
  d.num_classes = classes;
  std::mt19937_64 rng(seed);
  std::vector<float> img(shape.size());
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int c = 0; c < classes; ++c) {
      for (std::size_t k = 0; k < img.size(); ++k) {
        const double base = (static_cast<int>(k % shape.channels) == c % shape.channels) ? 0.7 : 0.2;
        img[k] = static_cast<float>(std::clamp(base + testing::uniform(rng, -0.15, 0.15), 0.0, 1.0));
      }
      d.add(img, c);
    }
  }
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Shape algebra
// ---------------------------------------------------------------------------

TEST_CASE("reference network shape trace matches the hand-rolled oracle") {
  const auto trace = infer_shapes(reference_spec(), kReferenceInput);
  const OracleTrace oracle = shape_oracle(399, 752, 3, {32, 32, 64, 64, 128, 256, 256}, {132, 132, 132}, 9, true);
  const auto& pool7 = trace[13];
  CHECK(pool7.name == "pool7");
  CHECK(pool7.output == Shape3{oracle.rows, oracle.cols, oracle.channels});
  CHECK(pool7.output == Shape3{3, 5, 256});
  CHECK(trace[14].name == "flatten");
  CHECK(trace[14].output.channels == 3840);
  CHECK(total_parameters(trace) == oracle.params);
  CHECK(total_parameters(trace) == 1'567'993u);
  CHECK(trace.back().name == "output");
  CHECK(trace.back().output.channels == 9);
}

TEST_CASE("valid padding trims each conv output") {
  NetworkSpec spec = reference_spec();
  spec.padding = Padding::valid;
  const auto trace = infer_shapes(spec, kReferenceInput);
  const OracleTrace oracle = shape_oracle(399, 752, 3, spec.conv_filters, spec.fc_widths, 9, false);
  CHECK(trace[13].output == Shape3{oracle.rows, oracle.cols, oracle.channels});
  CHECK(trace[13].output == Shape3{1, 3, 256});
  CHECK(total_parameters(trace) == oracle.params);
}

TEST_CASE("shape oracle agrees on random small architectures") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    NetworkSpec spec;
    spec.conv_filters.assign(1 + rng() % 4, 0);
    for (int& f : spec.conv_filters) f = 1 + static_cast<int>(rng() % 16);
    spec.fc_widths.assign(rng() % 3, 0);
    for (int& w : spec.fc_widths) w = 1 + static_cast<int>(rng() % 40);
    spec.num_classes = 2 + static_cast<int>(rng() % 8);
    spec.padding = rng() % 2 ? Padding::same : Padding::valid;
    const Shape3 in{60 + static_cast<int>(rng() % 60), 60 + static_cast<int>(rng() % 60), 1 + static_cast<int>(rng() % 3)};
    const auto trace = infer_shapes(spec, in);
    const OracleTrace o = shape_oracle(in.rows, in.cols, in.channels, spec.conv_filters, spec.fc_widths,
                                       spec.num_classes, spec.padding == Padding::same);
    CHECK(trace[2 * spec.conv_filters.size() - 1].output == Shape3{o.rows, o.cols, o.channels});
    CHECK(total_parameters(trace) == o.params);
    CHECK(Network<float>(spec, in, 1).parameter_count() == o.params);
  }
}

TEST_CASE("collapsing inputs name the failing layer") {
  try {
    infer_shapes(reference_spec(), {100, 188, 3});
    FAIL("expected collapse");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("pool7") != std::string::npos);
  }
  NetworkSpec spec = reference_spec();
  spec.padding = Padding::valid;
  try {
    infer_shapes(spec, {200, 400, 3});
    FAIL("expected collapse");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("conv") != std::string::npos);
  }
  CHECK_THROWS_AS(infer_shapes(reference_spec(), {0, 10, 3}), InvalidArgument);
  NetworkSpec bad = reference_spec();
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(infer_shapes(bad, kReferenceInput), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Layer gradients
// ---------------------------------------------------------------------------

TEST_CASE("conv2d backward matches finite differences") {
  std::mt19937_64 rng(5);
  for (Padding pad : {Padding::same, Padding::valid}) {
    const ConvGeometry g{{5, 6, 2}, 3, 3, 3, pad};
    std::vector<double> x = random_vec(g.input.size(), rng);
    std::vector<double> w = random_vec(g.patch_size() * g.filters, rng);
    std::vector<double> b = random_vec(g.filters, rng);
    const std::vector<double> r = random_vec(g.output().size(), rng);
    std::vector<double> patches, out;
    auto loss = [&] {
      conv2d_forward<double>(g, x, w, b, patches, out);
      return dot(out, r);
    };
    loss();
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0), dx(x.size(), 7.0);
    conv2d_backward<double>(g, r, w, patches, dw, db, dx);
    CHECK(max_relative_error(dw, numeric_gradient(w, loss)) < 1e-6);
    CHECK(max_relative_error(db, numeric_gradient(b, loss)) < 1e-6);
    CHECK(max_relative_error(dx, numeric_gradient(x, loss)) < 1e-6);
  }
}

TEST_CASE("conv2d forward matches a direct convolution") {
  std::mt19937_64 rng(6);
  const ConvGeometry g{{4, 5, 3}, 2, 3, 3, Padding::same};
  const auto x = random_vec(g.input.size(), rng);
  const auto w = random_vec(g.patch_size() * g.filters, rng);
  const auto b = random_vec(g.filters, rng);
  std::vector<double> patches, out;
  conv2d_forward<double>(g, x, w, b, patches, out);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 5; ++c) {
      for (int f = 0; f < 2; ++f) {
        double s = b[f];
        for (int kr = 0; kr < 3; ++kr) {
          for (int kc = 0; kc < 3; ++kc) {
            const int rr = r + kr - 1;
            const int cc = c + kc - 1;
            if (rr < 0 || rr >= 4 || cc < 0 || cc >= 5) continue;
            for (int ch = 0; ch < 3; ++ch) s += w[((f * 3 + kr) * 3 + kc) * 3 + ch] * x[(rr * 5 + cc) * 3 + ch];
          }
        }
        CHECK(out[(r * 5 + c) * 2 + f] == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("maxpool backward routes gradient to the window maximum") {
  std::mt19937_64 rng(7);
  const Shape3 in{5, 7, 2};
  std::vector<double> x = random_vec(in.size(), rng);
  std::vector<double> out;
  std::vector<std::uint32_t> arg;
  const Shape3 o = maxpool_forward<double>(in, 2, 2, x, out, arg);
  CHECK(o == Shape3{2, 3, 2});
  const auto r = random_vec(o.size(), rng);
  auto loss = [&] {
    maxpool_forward<double>(in, 2, 2, x, out, arg);
    return dot(out, r);
  };
  loss();
  std::vector<double> dx(x.size(), 3.0);
  maxpool_backward<double>(r, arg, dx);
  CHECK(max_relative_error(dx, numeric_gradient(x, loss)) < 1e-6);

  // Ties go to the first maximum in row-major window order.
  const std::vector<double> flat(in.size(), 1.0);
  maxpool_forward<double>(in, 2, 2, flat, out, arg);
  CHECK(arg[0] == 0u);
}

TEST_CASE("dense and relu backward match finite differences") {
  std::mt19937_64 rng(8);
  std::vector<double> x = random_vec(7, rng);
  std::vector<double> w = random_vec(4 * 7, rng);
  std::vector<double> b = random_vec(4, rng);
  const auto r = random_vec(4, rng);
  std::vector<double> y(4);
  auto loss = [&] {
    dense_forward<double>(x, w, b, y);
    relu_forward<double>(y);
    return dot(y, r);
  };
  loss();
  std::vector<double> dy = r;
  relu_backward<double>(y, dy);
  std::vector<double> dw(w.size(), 0.0), db(4, 0.0), dx(7);
  dense_backward<double>(x, w, dy, dw, db, dx);
  CHECK(max_relative_error(dw, numeric_gradient(w, loss)) < 1e-6);
  CHECK(max_relative_error(db, numeric_gradient(b, loss)) < 1e-6);
  CHECK(max_relative_error(dx, numeric_gradient(x, loss)) < 1e-6);
}

TEST_CASE("softmax cross-entropy logit gradient matches finite differences") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z = random_vec(5, rng, -3, 3);
    std::vector<double> t(5, 0.0);
    t[rng() % 5] = 1.0;
    std::vector<double> p(5);
    auto loss = [&] {
      softmax<double>(z, p);
      return cross_entropy<double>(p, t);
    };
    loss();
    std::vector<double> dz(5);
    cross_entropy_logit_grad<double>(p, t, dz);
    CHECK(max_relative_error(dz, numeric_gradient(z, loss)) < 1e-6);
  }
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = random_vec(9, rng, -50, 50);
    std::vector<double> p(9);
    softmax<double>(z, p);
    double s = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  const std::vector<double> huge{1000.0, 0.0};
  std::vector<double> p(2);
  softmax<double>(huge, p);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(p[1]));
}

TEST_CASE("cross-entropy examples") {
  const std::vector<double> uniform(9, 1.0 / 9.0);
  std::vector<double> t(9, 0.0);
  t[4] = 1.0;
  CHECK(cross_entropy<double>(uniform, t) == doctest::Approx(std::log(9.0)).epsilon(1e-9));
  std::vector<double> sure(9, 0.0);
  sure[4] = 1.0;
  CHECK(cross_entropy<double>(sure, t) <= 1e-9);
  // A zero probability on the true class stays finite.
  sure[4] = 0.0;
  sure[0] = 1.0;
  CHECK(std::isfinite(cross_entropy<double>(sure, t)));
}

TEST_CASE("full-stack gradient check at double precision") {
  NetworkSpec spec;
  spec.conv_filters = {2, 2};
  spec.fc_widths = {4};
  spec.num_classes = 3;
  spec.dropout_rate = 0.5;
  const Shape3 in{16, 16, 3};
  for (bool training : {false, true}) {
    Network<double> net(spec, in, 17);
    std::mt19937_64 rng(18);
    const Tensor<double> x = random_batch(2, in, rng);
    Tensor<double> y({2, 3});
    y.data[0 * 3 + 1] = 1.0;
    y.data[1 * 3 + 2] = 1.0;
    const auto analytic = net.loss_and_backward(x, y, 3, training);
    double worst = 0.0;
    for (std::size_t p = 0; p < net.parameters().size(); ++p) {
      std::vector<double>& w = net.parameters()[p].data;
      const auto numeric = numeric_gradient(w, [&] { return net.loss_and_backward(x, y, 3, training).loss; }, 1e-5);
      worst = std::max(worst, max_relative_error(analytic.gradients[p].data, numeric));
    }
    CAPTURE(training);
    CHECK(worst < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Dropout, inference, SGD
// ---------------------------------------------------------------------------

TEST_CASE("dropout masks are inverted and seeded") {
  std::vector<double> a(1000), b(1000), c(1000);
  dropout_mask<double>(0.5, 42, a);
  dropout_mask<double>(0.5, 42, b);
  dropout_mask<double>(0.5, 43, c);
  CHECK(a == b);
  CHECK(a != c);
  std::size_t kept = 0;
  for (double v : a) {
    CHECK((v == 0.0 || v == 2.0));
    kept += v != 0.0;
  }
  CHECK(kept > 430);
  CHECK(kept < 570);
  std::vector<double> none(10);
  dropout_mask<double>(0.0, 1, none);
  for (double v : none) CHECK(v == 1.0);
}

TEST_CASE("averaged dropout reproduces the inference output") {
  std::mt19937_64 rng(11);
  const auto x = random_vec(64, rng);
  const auto w = random_vec(132 * 64, rng);
  const auto b = random_vec(132, rng);
  std::vector<double> y(132);
  dense_forward<double>(x, w, b, y);
  std::vector<double> mean(132, 0.0), mask(132);
  const int samples = 20'000;
  for (int s = 0; s < samples; ++s) {
    dropout_mask<double>(0.5, static_cast<std::uint64_t>(s), mask);
    for (std::size_t k = 0; k < 132; ++k) mean[k] += mask[k] * y[k] / samples;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < 132; ++k) {
    num += (mean[k] - y[k]) * (mean[k] - y[k]);
    den += y[k] * y[k];
  }
  CHECK(std::sqrt(num / den) < 0.02);
}

TEST_CASE("inference forward is deterministic and ignores dropout") {
  NetworkSpec spec;
  spec.conv_filters = {3};
  spec.fc_widths = {8, 8};
  spec.num_classes = 4;
  const Shape3 in{8, 8, 3};
  Network<double> net(spec, in, 2);
  std::mt19937_64 rng(12);
  const auto x = random_batch(5, in, rng);
  const auto a = net.forward(x, false, 1);
  const auto b = net.forward(x, false, 99);
  CHECK(a.data == b.data);
  const auto t1 = net.forward(x, true, 1);
  const auto t2 = net.forward(x, true, 1);
  CHECK(t1.data == t2.data);
  CHECK(t1.data != a.data);
  for (std::size_t s = 0; s < 5; ++s) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 4; ++k) sum += a.data[s * 4 + k];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  spec.dropout_rate = 0.0;
  Network<double> plain(spec, in, 2);
  CHECK(plain.forward(x, true, 5).data == plain.forward(x, false).data);
}

TEST_CASE("zero weights give the uniform prediction and ln K loss") {
  NetworkSpec spec;
  spec.conv_filters = {2};
  spec.fc_widths = {4};
  spec.num_classes = 9;
  const Shape3 in{6, 6, 3};
  Network<double> net(spec, in, 3);
  for (auto& p : net.parameters()) std::fill(p.data.begin(), p.data.end(), 0.0);
  std::mt19937_64 rng(13);
  const auto x = random_batch(3, in, rng);
  Tensor<double> y({3, 9});
  for (std::size_t s = 0; s < 3; ++s) y.data[s * 9 + s] = 1.0;
  const auto r = net.loss_and_backward(x, y, 0, false);
  for (double p : r.probabilities.data) CHECK(p == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(std::log(9.0)).epsilon(1e-9));
}

TEST_CASE("batch and label arity mismatches are rejected") {
  NetworkSpec spec;
  spec.conv_filters = {2};
  spec.fc_widths = {};
  spec.num_classes = 3;
  Network<double> net(spec, {8, 8, 3}, 1);
  std::mt19937_64 rng(14);
  CHECK_THROWS_AS(net.forward(random_batch(2, {8, 9, 3}, rng), false), InvalidArgument);
  const auto x = random_batch(2, {8, 8, 3}, rng);
  CHECK_THROWS_AS(net.loss_and_backward(x, Tensor<double>({2, 4})), InvalidArgument);
  CHECK_THROWS_AS(net.loss_and_backward(x, Tensor<double>({3, 3})), InvalidArgument);
}

TEST_CASE("sgd step examples") {
  std::vector<Tensor<double>> params{Tensor<double>({2}, 1.0)};
  std::vector<Tensor<double>> grads{Tensor<double>({2}, 0.5)};
  sgd_step(params, grads, 0.0);
  CHECK(params[0].data == std::vector<double>{1.0, 1.0});
  sgd_step(params, grads, 0.1);
  CHECK(params[0].data[0] == doctest::Approx(0.95).epsilon(1e-15));
  std::vector<Tensor<double>> wrong{Tensor<double>({3})};
  CHECK_THROWS_AS(sgd_step(params, wrong, 0.1), InvalidArgument);
}

TEST_CASE("sgd decreases a convex quadratic monotonically") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const auto target = random_vec(6, rng, -5, 5);
    std::vector<Tensor<double>> params{Tensor<double>({6})};
    params[0].data = random_vec(6, rng, -5, 5);
    auto objective = [&] {
      double s = 0.0;
      for (std::size_t k = 0; k < 6; ++k) s += (params[0].data[k] - target[k]) * (params[0].data[k] - target[k]);
      return s;
    };
    double prev = objective();
    for (int step = 0; step < 50; ++step) {
      std::vector<Tensor<double>> g{Tensor<double>({6})};
      for (std::size_t k = 0; k < 6; ++k) g[0].data[k] = 2.0 * (params[0].data[k] - target[k]);
      sgd_step(params, g, 0.1);
      const double now = objective();
      CHECK(now <= prev);
      prev = now;
    }
  }
}

TEST_CASE("steps per epoch") {
  CHECK(steps_per_epoch(19'485, 16) == 1217u);
  CHECK(steps_per_epoch(21'310, 64) == 332u);
  CHECK(steps_per_epoch(64, 64) == 1u);
  CHECK(steps_per_epoch(65, 64) == 1u);
  CHECK_THROWS_AS(steps_per_epoch(63, 64), InvalidArgument);
  CHECK_THROWS_AS(steps_per_epoch(10, 0), InvalidArgument);
  CHECK_THROWS_AS(steps_per_epoch(0, 1), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Metrics, training, checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("metrics from a confusion matrix") {
  const auto ev = metrics_from_confusion({{3, 1}, {2, 4}});
  CHECK(ev.accuracy == doctest::Approx(0.7));
  REQUIRE(ev.per_class_f1.size() == 2);
  CHECK(ev.per_class_f1[0] == doctest::Approx(6.0 / 9.0));
  CHECK(ev.per_class_f1[1] == doctest::Approx(8.0 / 11.0));
  CHECK(ev.macro_f1 == doctest::Approx((6.0 / 9.0 + 8.0 / 11.0) / 2.0));
  CHECK_THROWS_AS(metrics_from_confusion({{1, 2}, {3}}), InvalidArgument);
}

TEST_CASE("metrics property: accuracy is the trace fraction") {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 8;
    std::vector<std::vector<std::size_t>> m(k, std::vector<std::size_t>(k));
    std::size_t total = 0, trace = 0;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        m[i][j] = rng() % 20;
        total += m[i][j];
        if (i == j) trace += m[i][j];
      }
    }
    const auto ev = metrics_from_confusion(m);
    CHECK(ev.accuracy == doctest::Approx(static_cast<double>(trace) / static_cast<double>(total)));
    for (double f : ev.per_class_f1) {
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
  }
}

TEST_CASE("dataset batches normalise to [0,1] and one-hot labels") {
  Dataset d;
  d.shape = {1, 2, 1};
  d.num_classes = 3;
  const std::vector<float> a{0.0f, 1.0f};
  d.add(a, 2);
  const std::size_t idx[] = {0};
  const auto x = d.batch<double>(idx);
  CHECK(x.data == std::vector<double>{0.0, 1.0});
  CHECK(d.one_hot<double>(idx).data == std::vector<double>{0.0, 0.0, 1.0});
  CHECK_THROWS_AS(d.add(a, 3), InvalidArgument);
  const std::vector<float> wrong{0.0f};
  CHECK_THROWS_AS(d.add(wrong, 0), InvalidArgument);
}

TEST_CASE("layer results do not depend on buffer alignment") {
  std::mt19937_64 rng(19);
  const ConvGeometry g{{9, 11, 3}, 5, 3, 3, Padding::same};
  const auto x = random_vec(g.input.size(), rng);
  const auto w = random_vec(g.patch_size() * g.filters, rng);
  const auto b = random_vec(g.filters, rng);
  const auto dy = random_vec(g.output().size(), rng);
  const auto dense_x = random_vec(301, rng);
  const auto dense_w = random_vec(13 * 301, rng);
  const auto dense_b = random_vec(13, rng);

  // Copies of the inputs starting at every offset within a cache line.
  auto shifted = [](const std::vector<double>& v, std::size_t offset, std::vector<double>& storage) {
    storage.assign(v.size() + offset, 0.0);
    std::copy(v.begin(), v.end(), storage.begin() + static_cast<std::ptrdiff_t>(offset));
    return std::span<const double>(storage).subspan(offset, v.size());
  };
  std::vector<double> ref_out, ref_dw, ref_db, ref_dense;
  for (std::size_t offset = 0; offset < 8; ++offset) {
    std::vector<double> sx, sw, sb, sdy, sdx, sdw, sdb;
    std::vector<double> patches, out;
    conv2d_forward<double>(g, shifted(x, offset, sx), shifted(w, offset, sw), shifted(b, offset, sb), patches, out);
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0), dx(x.size());
    conv2d_backward<double>(g, shifted(dy, offset, sdy), shifted(w, offset, sw), patches, dw, db, dx);
    std::vector<double> y(13);
    dense_forward<double>(shifted(dense_x, offset, sdx), shifted(dense_w, offset, sdw), shifted(dense_b, offset, sdb), y);
    if (offset == 0) {
      ref_out = out;
      ref_dw = dw;
      ref_db = db;
      ref_dense = y;
      continue;
    }
    CHECK(out == ref_out);
    CHECK(dw == ref_dw);
    CHECK(db == ref_db);
    CHECK(y == ref_dense);
  }
}

TEST_CASE("training is seeded, deterministic and thread-count independent") {
  NetworkSpec spec;
  spec.conv_filters = {4, 4};
  spec.fc_widths = {16};
  spec.num_classes = 3;
  const Shape3 in{8, 8, 3};
  const Dataset data = toy_dataset(20, 3, in, 4);
  TrainConfig cfg{8, 0.05, 3, 21};

  auto run = [&](int threads) {
    testing::ThreadOverride guard(threads);
    Network<float> net(spec, in, 9);
    std::vector<StepRecord> log;
    for (int e = 0; e < cfg.epochs; ++e) {
      const auto m = train_epoch(net, data, cfg, e, [&](const StepRecord& r) { log.push_back(r); });
      CHECK(m.steps == steps_per_epoch(data.size(), cfg.batch_size));
    }
    return std::make_pair(net.parameters(), log);
  };
  const auto [p1, log1] = run(1);
  const auto [p2, log2] = run(1);
  const auto [p3, log3] = run(3);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t p = 0; p < p1.size(); ++p) {
    CHECK(p1[p].data == p2[p].data);
    CHECK(p1[p].data == p3[p].data);
  }
  REQUIRE(log1.size() == 3 * steps_per_epoch(60, 8));
  for (std::size_t i = 0; i < log1.size(); ++i) CHECK(log1[i].loss == log3[i].loss);
}

TEST_CASE("training learns a separable toy problem") {
  NetworkSpec spec;
  spec.conv_filters = {4};
  spec.fc_widths = {16};
  spec.num_classes = 3;
  spec.dropout_rate = 0.0;
  const Shape3 in{8, 8, 3};
  const Dataset data = toy_dataset(20, 3, in, 5);
  Network<float> net(spec, in, 3);
  TrainConfig cfg{6, 0.1, 1, 2};
  for (int e = 0; e < 15; ++e) train_epoch(net, data, cfg, e);
  const auto ev = evaluate(net, data, 7);
  CHECK(ev.accuracy >= 0.95);
  CHECK_THROWS_AS(train_epoch(net, data, TrainConfig{6, 0.0, 1, 0}, 0), InvalidArgument);
}

TEST_CASE("checkpoint round trip preserves parameters and predictions") {
  const auto dir = testing::scratch_dir("checkpoint");
  NetworkSpec spec;
  spec.conv_filters = {3, 5};
  spec.fc_widths = {7};
  spec.num_classes = 4;
  spec.dropout_rate = 0.25;
  spec.padding = Padding::valid;
  const Shape3 in{12, 10, 3};
  Network<float> net(spec, in, 77);
  save_checkpoint(dir / "m.fnet", net);
  const Network<float> back = load_checkpoint(dir / "m.fnet");
  CHECK(back.spec().conv_filters == spec.conv_filters);
  CHECK(back.spec().fc_widths == spec.fc_widths);
  CHECK(back.spec().num_classes == 4);
  CHECK(back.spec().dropout_rate == 0.25);
  CHECK(back.spec().padding == Padding::valid);
  CHECK(back.input_shape() == in);
  CHECK(back.seed() == 77u);
  for (std::size_t p = 0; p < net.parameters().size(); ++p) {
    CHECK(back.parameters()[p].data == net.parameters()[p].data);
  }
  Tensor<float> x({2, 12, 10, 3}, 0.3f);
  CHECK(back.forward(x, false).data == net.forward(x, false).data);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.fnet"), IoError);
  {
    std::ofstream out(dir / "junk.fnet", std::ios::binary);
    out << "NOTANET";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.fnet"), IoError);
  const std::string bytes = testing::read_bytes(dir / "m.fnet");
  {
    std::ofstream out(dir / "short.fnet", std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.fnet"), IoError);
}

TEST_CASE("training log csv layout") {
  const auto dir = testing::scratch_dir("trainlog");
  write_training_log(dir / "log.csv", {{0, 0, 1.5, 0.25}, {0, 1, 1.25, 0.5}});
  const std::string text = testing::read_bytes(dir / "log.csv");
  CHECK(text.rfind("epoch,step,loss,accuracy\n", 0) == 0);
  CHECK(text.find("0,1,1.25,0.5\n") != std::string::npos);
}
