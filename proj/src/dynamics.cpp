#include "wrs/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "wrs/analysis.hpp"
#include "wrs/dataset.hpp"
#include "wrs/optim.hpp"
#include "wrs/regularize.hpp"
#include "wrs/slices.hpp"
#include "wrs/training.hpp"

namespace wrs {

namespace {

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

Tensor random_inputs(std::mt19937_64& rng, std::size_t batch, const Shape& sample) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Shape shape{batch};
  shape.insert(shape.end(), sample.begin(), sample.end());
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = normal(rng);
  return Tensor(std::move(shape), std::move(data));
}

struct SliceCopy {
  std::size_t param = 0;
  std::vector<double> weight;
  std::vector<double> grad;
};

std::vector<SliceCopy> copy_scale_invariant(const Network& net) {
  std::vector<SliceCopy> out;
  const auto& params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].scale_invariant) continue;
    const auto w = params[i].value.data();
    const auto g = params[i].value.grad();
    out.push_back({i, {w.begin(), w.end()}, {g.begin(), g.end()}});
  }
  return out;
}

// Small task whose labels carry no signal (zero class separation), so
// gradients stay large for hundreds of steps. The norm identities are only
// measurable while lr*|g|/|w| stays well above double rounding: storing
// w - lr*g perturbs |w|^2 by about 1e-16 |w|^2.
struct ToyRun {
  Dataset data;
  Network network;
  std::mt19937_64 rng;
  std::vector<std::size_t> order;
  std::size_t cursor = 0;

  ToyRun(std::uint64_t seed)
      : data(make_synthetic({.classes = 4, .dim = 16, .samples = 512, .seed = seed, .separation = 0.0})),
        network(Network::build(ArchitectureSpec::bn_mlp({16, 32, 32, 4}), seed)),
        rng(seed) {
    network.set_batchnorm_epsilon(kExactBnEpsilon);
    order.resize(data.size());
    std::iota(order.begin(), order.end(), 0);
  }

  void next_gradients(std::size_t batch = 32) {
    if (cursor + batch > order.size() || cursor == 0) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::span<const std::size_t> idx(order.data() + cursor, batch);
    cursor += batch;
    loss_and_gradients(network, data.batch(idx), data.batch_labels(idx));
  }
};

}  // namespace

bool two_point_statistics(const Network& network, const Parameter& weight, std::size_t batch) {
  const auto& node = network.layers().at(weight.layer);
  return batch * shape_numel(node.output_shape) / node.spec.units == 2;
}

RandomProblem random_bn_problem(std::mt19937_64& rng, const RandomProblemOptions& o) {
  ArchitectureSpec spec;
  const std::size_t classes = uniform_int(rng, 2, 10);
  std::size_t hidden = uniform_int(rng, 1, o.max_hidden);
  if (o.conv) {
    const std::size_t size = uniform_int(rng, 4, 8);
    spec.input = {uniform_int(rng, 1, 3), size, size};
    std::size_t extent = size;
    const std::size_t blocks = uniform_int(rng, 1, std::min<std::size_t>(2, hidden));
    for (std::size_t b = 0; b < blocks; ++b) {
      spec.layers.push_back({.kind = LayerKind::conv2d, .units = uniform_int(rng, 2, std::min<std::size_t>(8, o.max_width)),
                             .kernel = 3, .stride = 1, .padding = 1});
      spec.layers.push_back({.kind = LayerKind::batchnorm});
      spec.layers.push_back({.kind = LayerKind::relu});
      if (extent >= 4 && uniform_int(rng, 0, 1) == 1) {
        spec.layers.push_back({.kind = LayerKind::maxpool, .window = 2});
        extent /= 2;
      }
    }
    spec.layers.push_back({.kind = LayerKind::flatten});
    hidden -= blocks;
  } else {
    spec.input = {uniform_int(rng, 2, 16)};
  }
  for (std::size_t h = 0; h < hidden; ++h) {
    spec.layers.push_back({.kind = LayerKind::dense, .units = uniform_int(rng, 2, o.max_width)});
    spec.layers.push_back({.kind = LayerKind::batchnorm});
    spec.layers.push_back({.kind = LayerKind::relu});
  }
  spec.layers.push_back({.kind = LayerKind::dense, .units = classes});

  Network net = Network::build(spec, rng(), {.momentum = 0.1, .epsilon = o.bn_epsilon});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& p : net.parameters()) {
    if (p.role == ParamRole::bn_gamma) {
      for (auto& g : p.value.mutable_data()) g = (0.5 + 1.5 * unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    } else if (p.role == ParamRole::bn_beta) {
      for (auto& b : p.value.mutable_data()) b = unit(rng) - 0.5;
    }
  }
  const std::size_t batch = uniform_int(rng, o.min_batch, o.max_batch);
  Tensor x = random_inputs(rng, batch, spec.input);
  std::vector<std::size_t> labels(batch);
  for (auto& y : labels) y = uniform_int(rng, 0, classes - 1);
  return {std::move(net), std::move(x), std::move(labels)};
}

DynamicsCheck check_gradient_orthogonality(std::size_t trials, std::uint64_t seed) {
  DynamicsCheck c{.name = "gradient orthogonality", .bound = 1e-8};
  std::mt19937_64 rng(seed);
  std::size_t two_point = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    auto problem = random_bn_problem(rng, {.conv = t % 2 == 1});
    loss_and_gradients(problem.network, problem.batch, problem.labels);
    for (const auto& p : problem.network.parameters()) {
      if (!p.scale_invariant) continue;
      if (two_point_statistics(problem.network, p, problem.batch.dim(0))) {
        ++two_point;
        continue;
      }
      const auto w = p.value.data();
      const auto g = p.value.grad();
      const std::size_t outs = p.slice_count();
      for (std::size_t j = 0; j < outs; ++j) {
        const double ng = slices::norm(g, outs, j);
        ++c.cases;
        if (ng == 0.0) continue;
        c.worst = std::max(c.worst, std::abs(slices::dot(w, g, outs, j)) / (slices::norm(w, outs, j) * ng));
      }
    }
  }
  c.passed = c.worst <= c.bound;
  c.detail = std::to_string(trials) + " networks, " + std::to_string(c.cases) + " slices";
  if (two_point) c.detail += " (" + std::to_string(two_point) + " two-point layers skipped: gradient identically zero)";
  return c;
}

DynamicsCheck check_norm_law(std::size_t steps, std::uint64_t seed) {
  DynamicsCheck c{.name = "discrete norm law", .bound = 1e-10};
  ToyRun run(seed);
  const double lr = 0.1;
  Optimizer opt({.kind = OptimizerKind::sgd, .lr = lr}, run.network.parameters().size());
  const std::vector<double> decay(run.network.parameters().size(), 0.0);
  bool monotone = true;
  for (std::size_t s = 0; s < steps; ++s) {
    run.next_gradients();
    const auto before = copy_scale_invariant(run.network);
    opt.step(run.network.parameters(), decay, lr);
    for (const auto& b : before) {
      const auto after = run.network.parameters()[b.param].value.data();
      const std::size_t outs = run.network.parameters()[b.param].slice_count();
      for (std::size_t j = 0; j < outs; ++j) {
        double growth = 0.0;
        for (std::size_t k = j; k < after.size(); k += outs) growth += (after[k] - b.weight[k]) * (after[k] + b.weight[k]);
        const double expected = lr * lr * slices::squared_norm(b.grad, outs, j);
        ++c.cases;
        monotone = monotone && growth >= 0.0;
        if (expected == 0.0) {
          if (growth != 0.0) c.worst = std::max(c.worst, 1.0);
          continue;
        }
        c.worst = std::max(c.worst, std::abs(growth - expected) / expected);
      }
    }
  }
  c.passed = c.worst <= c.bound && monotone;
  c.detail = std::to_string(steps) + " steps, " + std::to_string(c.cases) + " slice-steps" +
             (monotone ? "" : ", norm decreased on some step");
  return c;
}

DynamicsCheck check_exponential_decay() {
  DynamicsCheck c{.name = "exponential decay", .bound = 1.0};
  const double lr = 0.1;
  const double products[] = {1e-2, 1e-3, 1e-4};
  const double tolerances[] = {2e-2, 2e-3, 2e-4};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w0(32);
  for (auto& v : w0) v = dist(rng);
  const double norm0 = std::inner_product(w0.begin(), w0.end(), w0.begin(), 0.0);

  double previous = std::numeric_limits<double>::infinity();
  bool shrinking = true;
  for (std::size_t k = 0; k < 3; ++k) {
    const double lambda = products[k] / lr;
    const auto steps = static_cast<std::size_t>(std::floor(2.0 / products[k] + 1e-9));
    std::vector<double> w = w0;
    const std::vector<double> zero(w.size(), 0.0);
    ParamState state(w.size());
    const OptimizerConfig cfg{.kind = OptimizerKind::sgd, .lr = lr};
    std::vector<double> t_grid(steps + 1), observed(steps + 1);
    for (std::size_t s = 0; s <= steps; ++s) {
      if (s > 0) sgd_step(w, zero, state, cfg, lr, lambda);
      t_grid[s] = lr * static_cast<double>(s);
      observed[s] = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
    }
    const auto reference = continuous_decay_reference(norm0, lambda, t_grid);
    double err = 0.0;
    for (std::size_t s = 0; s <= steps; ++s) err = std::max(err, std::abs(observed[s] - reference[s]) / reference[s]);
    c.worst = std::max(c.worst, err / tolerances[k]);
    shrinking = shrinking && err < previous;
    previous = err;
    c.cases += steps;
    if (!c.detail.empty()) c.detail += ", ";
    c.detail += "lr*lambda=" + format_double("%.0e", products[k]) + " err " + format_double("%.3e", err) +
                " (bound " + format_double("%.0e", tolerances[k]) + ")";
  }
  c.passed = c.worst <= c.bound && shrinking;
  if (!shrinking) c.detail += ", error not shrinking";
  return c;
}

DynamicsCheck check_scale_invariance(std::size_t trials, std::uint64_t seed) {
  DynamicsCheck c{.name = "scale and argmax invariance", .bound = 1e-10};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> log_scale(std::log(0.1), std::log(10.0));
  std::size_t flips = 0, inputs = 0;

  auto hidden_gap = [](const ForwardTrace& a, const ForwardTrace& b, const Network& net) {
    double gap = 0.0;
    for (std::size_t i = 0; i < a.outputs.size(); ++i) {
      if (net.layers()[i].has_weight()) continue;
      const auto x = a.outputs[i].data();
      const auto y = b.outputs[i].data();
      for (std::size_t k = 0; k < x.size(); ++k) gap = std::max(gap, std::abs(x[k] - y[k]));
    }
    return gap;
  };
  auto count_flips = [](const Tensor& a, const Tensor& b) {
    const auto pa = argmax_rows(a), pb = argmax_rows(b);
    std::size_t n = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) n += pa[i] != pb[i];
    return n;
  };

  for (std::size_t t = 0; t < trials; ++t) {
    auto problem = random_bn_problem(rng, {.conv = t % 2 == 1, .max_batch = 2});
    Network& net = problem.network;
    const Tensor x = random_inputs(rng, 1000, net.spec().input);
    NoGradGuard guard;
    const ForwardTrace ref = net.forward_trace(x, Mode::train);

    Network scaled = net.clone();
    for (auto& p : scaled.parameters()) {
      if (!p.scale_invariant) continue;
      const std::size_t outs = p.slice_count();
      for (std::size_t j = 0; j < outs; ++j) slices::scale(p.value.mutable_data(), outs, j, std::exp(log_scale(rng)));
    }
    c.worst = std::max(c.worst, hidden_gap(ref, scaled.forward_trace(x, Mode::train), net));

    // One common factor on the whole output layer.
    Network head = net.clone();
    const double common = std::exp(log_scale(rng));
    for (auto& v : head.layers()[head.output_layer()].weight->mutable_data()) v *= common;
    flips += count_flips(ref.logits, head.forward(x, Mode::train));

    // weight_rescale on hidden slices, then with output columns of equal norm.
    Network rescaled = net.clone();
    weight_rescale(rescaled, false);
    const ForwardTrace after = rescaled.forward_trace(x, Mode::train);
    c.worst = std::max(c.worst, hidden_gap(ref, after, net));
    flips += count_flips(ref.logits, after.logits);

    weight_rescale(rescaled, true);
    const Tensor unit_head = rescaled.forward(x, Mode::train);
    for (auto& v : rescaled.layers()[rescaled.output_layer()].weight->mutable_data()) v *= common;
    weight_rescale(rescaled, true);
    flips += count_flips(unit_head, rescaled.forward(x, Mode::train));
    inputs += 3 * 1000;
    c.cases += 1;
  }
  c.passed = c.worst <= c.bound && flips == 0;
  c.detail = std::to_string(trials) + " networks, " + std::to_string(flips) + " argmax changes over " +
             std::to_string(inputs) + " predictions";
  return c;
}

DynamicsCheck check_wd_contraction(std::size_t steps, std::uint64_t seed) {
  DynamicsCheck c{.name = "weight-decay contraction", .bound = 1e-10};
  ToyRun run(seed);
  const double lr = 0.1, lambda = 5e-3;
  Optimizer opt({.kind = OptimizerKind::sgd, .lr = lr}, run.network.parameters().size());
  const std::vector<double> decay(run.network.parameters().size(), lambda);
  for (std::size_t s = 0; s < steps; ++s) {
    run.next_gradients();
    const auto before = copy_scale_invariant(run.network);
    opt.step(run.network.parameters(), decay, lr);
    for (const auto& b : before) {
      const auto after = run.network.parameters()[b.param].value.data();
      const std::size_t outs = run.network.parameters()[b.param].slice_count();
      for (std::size_t j = 0; j < outs; ++j) {
        const double observed = slices::squared_norm(after, outs, j);
        const double shrink = 1.0 - lr * lambda;
        const double expected =
            shrink * shrink * slices::squared_norm(b.weight, outs, j) + lr * lr * slices::squared_norm(b.grad, outs, j);
        c.worst = std::max(c.worst, std::abs(observed - expected) / observed);
        ++c.cases;
      }
    }
  }
  c.passed = c.worst <= c.bound;
  c.detail = std::to_string(steps) + " steps, " + std::to_string(c.cases) + " slice-steps";
  return c;
}

DynamicsCheck check_adamp_tangency(std::size_t steps, std::uint64_t seed) {
  DynamicsCheck c{.name = "AdamP tangency", .bound = 1e-12};
  ToyRun run(seed);
  const double lr = 1e-3;
  Optimizer opt({.kind = OptimizerKind::adamp, .lr = lr}, run.network.parameters().size());
  const std::vector<double> decay(run.network.parameters().size(), 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    run.next_gradients();
    const auto before = copy_scale_invariant(run.network);
    opt.step(run.network.parameters(), decay, lr);
    for (const auto& b : before) {
      const auto& u = opt.state(b.param).effective;
      const std::size_t outs = run.network.parameters()[b.param].slice_count();
      for (std::size_t j = 0; j < outs; ++j) {
        const double nu = slices::norm(u, outs, j);
        ++c.cases;
        if (nu == 0.0) continue;
        c.worst = std::max(c.worst, std::abs(slices::dot(b.weight, u, outs, j)) / (slices::norm(b.weight, outs, j) * nu));
      }
    }
  }
  c.passed = c.worst <= c.bound;
  c.detail = std::to_string(steps) + " steps, " + std::to_string(c.cases) + " slice-steps";
  return c;
}

std::vector<DynamicsCheck> verify_dynamics(std::size_t trials, std::uint64_t seed) {
  return {
      check_gradient_orthogonality(trials, seed),
      check_norm_law(500, seed),
      check_exponential_decay(),
      check_scale_invariance(std::max<std::size_t>(trials / 2, 1), seed),
      check_wd_contraction(500, seed),
      check_adamp_tangency(200, seed),
  };
}

}  // namespace wrs
