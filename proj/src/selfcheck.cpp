#include "cstafnet/selfcheck.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

#include "cstafnet/data_pipeline.hpp"
#include "cstafnet/evaluation.hpp"
#include "cstafnet/model.hpp"
#include "cstafnet/training.hpp"

namespace cstafnet {

double compare_gradients(std::vector<ArrayRef> params, const std::vector<ArrayRef>& grads,
                         const std::function<double()>& loss, double h, std::string* worst_name) {
  if (params.size() != grads.size()) throw ShapeError("compare_gradients(): array lists differ in length");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ArrayRef& a = params[i];
    if (!a.trainable) continue;
    if (a.shape != grads[i].shape) throw ShapeError("compare_gradients(): shape mismatch for '" + a.name + "'");
    const Matrix start = Eigen::Map<const Matrix>(a.data, a.size(), 1);
    const Matrix numeric = finite_diff_grad(
        [&](const Matrix& v) {
          Eigen::Map<Matrix>(a.data, a.size(), 1) = v;
          return loss();
        },
        start, h);
    Eigen::Map<Matrix>(a.data, a.size(), 1) = start;
    const double err = max_relative_error(Eigen::Map<const Matrix>(grads[i].data, a.size(), 1), numeric);
    if (err >= worst) {
      worst = err;
      if (worst_name) *worst_name = a.name;
    }
  }
  return worst;
}

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

RowVector random_row(Eigen::Index n, Rng& rng, double scale = 1.0) {
  RowVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

int random_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1))); }

ArrayRef input_ref(const std::string& name, Matrix& m) { return {name, m.data(), {m.rows(), m.cols()}, true}; }

double weighted_sum(const Matrix& out, const Matrix& w) { return out.cwiseProduct(w).sum(); }

struct GradientCase {
  std::string name;
  std::vector<ArrayRef> params;
  std::vector<ArrayRef> grads;
  std::function<double()> loss;
};

CheckResult run_case(GradientCase c, bool inject) {
  if (inject && !c.grads.empty()) c.grads.front().data[0] += 1e-3 * (1.0 + std::abs(c.grads.front().data[0]));
  std::string worst_name;
  const double worst = compare_gradients(c.params, c.grads, c.loss, 1e-5, &worst_name);
  CheckResult r{"gradient", c.name, worst <= kGradientTolerance, worst, {}};
  std::ostringstream d;
  d << "max rel err " << std::scientific << std::setprecision(2) << worst << " (" << worst_name << ")";
  r.detail = d.str();
  return r;
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(const SelfcheckOptions& options) {
  Rng rng(options.seed, 0x6C);
  std::vector<CheckResult> results;
  bool inject = options.inject_fault;
  auto run = [&](GradientCase c) {
    results.push_back(run_case(std::move(c), inject));
    inject = false;  // one perturbed case is enough
  };

  // Dense, every activation; weighted sums so a softmax output is not constant.
  for (Activation act : {Activation::linear, Activation::relu, Activation::sigmoid, Activation::softmax}) {
    const int b = random_int(rng, 1, 3), in = random_int(rng, 1, 5), out = random_int(rng, 2, 5);
    DenseParams p = make_dense(in, out, rng);
    p.bias = random_row(out, rng, 0.5);
    Matrix x = random_matrix(b, in, rng);
    const Matrix w = random_matrix(b, out, rng);
    DenseCache cache;
    dense(x, p, act, &cache);
    DenseParams g = zeros_like(p);
    Matrix dx = dense_backward(cache, p, act, w, g);
    std::vector<ArrayRef> pa, ga;
    p.list_arrays("", pa);
    g.list_arrays("", ga);
    pa.push_back(input_ref("input", x));
    ga.push_back(input_ref("input", dx));
    run({"dense/" + to_string(act), pa, ga, [&, act] { return weighted_sum(dense(x, p, act), w); }});
  }

  for (int k : {3, 5, 7}) {
    for (Activation act : {Activation::linear, Activation::relu}) {
      const int t = random_int(rng, 1, 6), cin = random_int(rng, 1, 5), f = random_int(rng, 1, 5);
      ConvParams p = make_conv(k, cin, f, rng);
      p.bias = random_row(f, rng, 0.5);
      Matrix x = random_matrix(t, cin, rng);
      const Matrix w = random_matrix(t, f, rng);
      ConvCache cache;
      conv1d_same(x, p, act, &cache);
      ConvParams g = zeros_like(p);
      Matrix dx = conv1d_same_backward(cache, p, act, w, g);
      std::vector<ArrayRef> pa, ga;
      p.list_arrays("", pa);
      g.list_arrays("", ga);
      pa.push_back(input_ref("input", x));
      ga.push_back(input_ref("input", dx));
      run({"conv1d_same/k" + std::to_string(k) + "/" + to_string(act), pa, ga,
           [&, act] { return weighted_sum(conv1d_same(x, p, act), w); }});
    }
  }

  {
    const int t = random_int(rng, 2, 6), f = random_int(rng, 1, 4);
    std::vector<ConvParams> convs;
    for (int k : {3, 5, 7}) convs.push_back(make_conv(k, 1, f, rng));
    Matrix x = random_matrix(t, 1, rng);
    const Matrix w = random_matrix(t, 3 * f, rng);
    MultiScaleCache cache;
    multi_scale_block(x, convs, &cache);
    std::vector<ConvParams> g;
    for (const auto& c : convs) g.push_back(zeros_like(c));
    Matrix dx = multi_scale_block_backward(cache, convs, w, g);
    std::vector<ArrayRef> pa, ga;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      convs[i].list_arrays("conv" + std::to_string(i) + ".", pa);
      g[i].list_arrays("conv" + std::to_string(i) + ".", ga);
    }
    pa.push_back(input_ref("input", x));
    ga.push_back(input_ref("input", dx));
    run({"multi_scale_block", pa, ga, [&] { return weighted_sum(multi_scale_block(x, convs), w); }});
  }

  for (Mode mode : {Mode::train, Mode::infer}) {
    const int b = random_int(rng, 2, 3), t = random_int(rng, 1, 6), c = random_int(rng, 1, 5);
    BatchNormParams p = make_batch_norm(c);
    p.gamma = random_row(c, rng, 0.5).array() + 1.0;
    p.beta = random_row(c, rng, 0.5);
    p.running_mean = random_row(c, rng, 0.5);
    p.running_var = random_row(c, rng, 0.5).array().abs() + 0.5;
    std::vector<Matrix> x, w;
    for (int i = 0; i < b; ++i) {
      x.push_back(random_matrix(t, c, rng));
      w.push_back(random_matrix(t, c, rng));
    }
    BatchNormCache cache;
    batch_norm(x, p, mode, &cache);
    BatchNormParams g = zeros_like(p);
    std::vector<Matrix> dx = batch_norm_backward(cache, p, w, g);
    std::vector<ArrayRef> pa, ga;
    p.list_arrays("", pa);
    g.list_arrays("", ga);
    for (int i = 0; i < b; ++i) {
      pa.push_back(input_ref("input" + std::to_string(i), x[static_cast<std::size_t>(i)]));
      ga.push_back(input_ref("input" + std::to_string(i), dx[static_cast<std::size_t>(i)]));
    }
    run({std::string("batch_norm/") + (mode == Mode::train ? "train" : "infer"), pa, ga, [&, mode] {
           const auto y = batch_norm(x, p, mode);
           double s = 0.0;
           for (std::size_t i = 0; i < y.size(); ++i) s += weighted_sum(y[i], w[i]);
           return s;
         }});
  }

  {
    const int t = random_int(rng, 1, 6), c = random_int(rng, 1, 5);
    Matrix x = random_matrix(t, c, rng);
    const Matrix w = random_matrix(t, c, rng);
    const Matrix mask = make_dropout_mask(t, c, 0.4, rng);
    Matrix dx = w.cwiseProduct(mask);
    run({"dropout/frozen_mask", {input_ref("input", x)}, {input_ref("input", dx)},
         [&] { return weighted_sum(x.cwiseProduct(mask), w); }});
  }

  {
    const int t = random_int(rng, 1, 6), cin = random_int(rng, 1, 5), u = random_int(rng, 1, 5);
    GruParams p = make_gru(cin, u, rng);
    p.bias = random_row(3 * u, rng, 0.5);
    Matrix x = random_matrix(t, cin, rng);
    const Matrix w = random_matrix(t, u, rng);
    GruCache cache;
    gru_sequence(x, p, &cache);
    GruParams g = zeros_like(p);
    Matrix dx = gru_sequence_backward(cache, p, w, g);
    std::vector<ArrayRef> pa, ga;
    p.list_arrays("", pa);
    g.list_arrays("", ga);
    pa.push_back(input_ref("input", x));
    ga.push_back(input_ref("input", dx));
    run({"gru_sequence", pa, ga, [&] { return weighted_sum(gru_sequence(x, p), w); }});
  }

  {
    const int t = random_int(rng, 1, 6), cin = random_int(rng, 1, 5), u = random_int(rng, 1, 4);
    GruParams pf = make_gru(cin, u, rng), pb = make_gru(cin, u, rng);
    pf.bias = random_row(3 * u, rng, 0.5);
    pb.bias = random_row(3 * u, rng, 0.5);
    Matrix x = random_matrix(t, cin, rng);
    const Matrix w = random_matrix(t, 2 * u, rng);
    BiGruCache cache;
    bigru(x, pf, pb, &cache);
    GruParams gf = zeros_like(pf), gb = zeros_like(pb);
    Matrix dx = bigru_backward(cache, pf, pb, w, gf, gb);
    std::vector<ArrayRef> pa, ga;
    pf.list_arrays("fwd.", pa);
    pb.list_arrays("bwd.", pa);
    gf.list_arrays("fwd.", ga);
    gb.list_arrays("bwd.", ga);
    pa.push_back(input_ref("input", x));
    ga.push_back(input_ref("input", dx));
    run({"bigru", pa, ga, [&] { return weighted_sum(bigru(x, pf, pb), w); }});
  }

  {
    const int t = random_int(rng, 1, 6), c = random_int(rng, 1, 5);
    TemporalAttentionParams p = make_temporal_attention(t, rng);
    p.bias = random_row(t, rng, 0.5);
    Matrix x = random_matrix(t, c, rng);
    const Matrix w = random_matrix(t, c, rng);
    TemporalAttentionCache cache;
    temporal_attention(x, p, &cache);
    TemporalAttentionParams g = zeros_like(p);
    Matrix dx = temporal_attention_backward(cache, p, w, g);
    std::vector<ArrayRef> pa, ga;
    p.list_arrays("", pa);
    g.list_arrays("", ga);
    pa.push_back(input_ref("input", x));
    ga.push_back(input_ref("input", dx));
    run({"temporal_attention", pa, ga, [&] { return weighted_sum(temporal_attention(x, p), w); }});
  }

  {
    const int t = random_int(rng, 1, 6), r = random_int(rng, 1, 2), c = r * random_int(rng, 1, 2) * 2;
    ChannelAttentionParams p = make_channel_attention(c, r, rng);
    p.b1 = random_row(p.b1.size(), rng, 0.5);
    p.b2 = random_row(c, rng, 0.5);
    Matrix x = random_matrix(t, c, rng);
    const Matrix w = random_matrix(t, c, rng);
    ChannelAttentionCache cache;
    channel_attention(x, p, &cache);
    ChannelAttentionParams g = zeros_like(p);
    Matrix dx = channel_attention_backward(cache, p, w, g);
    std::vector<ArrayRef> pa, ga;
    p.list_arrays("", pa);
    g.list_arrays("", ga);
    pa.push_back(input_ref("input", x));
    ga.push_back(input_ref("input", dx));
    run({"channel_attention", pa, ga, [&] { return weighted_sum(channel_attention(x, p), w); }});
  }

  {
    const int t = random_int(rng, 1, 6), c = random_int(rng, 1, 5);
    Matrix x = random_matrix(t, c, rng);
    const RowVector w = random_row(c, rng);
    MaxPoolCache cache;
    global_max_pool(x, &cache);
    Matrix dx = global_max_pool_backward(cache, w);
    run({"global_max_pool", {input_ref("input", x)}, {input_ref("input", dx)},
         [&] { return global_max_pool(x).cwiseProduct(w).sum(); }});
  }

  // Losses: gradients against FD on the probability inputs, away from the clamp.
  {
    std::vector<int> y;
    Matrix p(4, 1);
    for (Eigen::Index i = 0; i < 4; ++i) {
      p(i, 0) = rng.uniform(0.05, 0.95);
      y.push_back(static_cast<int>(i % 2));
    }
    Matrix g = bce_loss(y, p).grad;
    CheckResult r = run_case({"bce_loss", {input_ref("p", p)}, {input_ref("p", g)}, [&] { return bce_loss(y, p).loss; }}, false);
    r.passed = r.worst <= 1e-6;
    results.push_back(r);
  }
  {
    std::vector<int> y{0, 2, 1};
    Matrix p = softmax(random_matrix(3, 3, rng), 1);
    Matrix g = scce_loss(y, p).grad;
    CheckResult r = run_case({"scce_loss", {input_ref("P", p)}, {input_ref("P", g)}, [&] { return scce_loss(y, p).loss; }}, false);
    r.passed = r.worst <= 1e-6;
    results.push_back(r);
  }

  // Whole composite on the tiny configuration, mean SCCE, frozen dropout,
  // train-mode batch norm.
  {
    const ModelConfig cfg = tiny_config();
    ModelParams params = build_model(cfg);
    Rng prng(options.seed, 0x77);
    for (auto& a : params.arrays())
      if (a.trainable && a.name.find("bias") != std::string::npos) a.flat() = random_matrix(a.size(), 1, prng, 0.3);
    const int batch = 2;
    Matrix x = random_matrix(batch, cfg.input_length, prng);
    const std::vector<int> y{0, 2};
    DropoutMasks masks;
    for (int b = 0; b < batch; ++b)
      masks.conv.push_back(make_dropout_mask(cfg.input_length, cfg.concat_channels(), cfg.dropout_conv, prng));
    masks.hidden = make_dropout_mask(batch, cfg.hidden_units, cfg.dropout_hidden, prng);

    ForwardCache cache;
    const Matrix out = forward(params, cfg, x, Mode::train, nullptr, &cache, &masks);
    ModelParams grads = backward(params, cfg, cache, scce_loss(y, out).grad);
    run({"model/tiny", params.arrays(), grads.arrays(), [&] {
           return scce_loss(y, forward(params, cfg, x, Mode::train, nullptr, nullptr, &masks)).loss;
         }});
  }
  return results;
}

std::vector<CheckResult> run_normalization_checks(const SelfcheckOptions& options) {
  Rng rng(options.seed, 0x4E);
  double softmax_err = 0.0, attn_err = 0.0;
  bool softmax_open = true, scale_open = true;
  double scale_min = 1.0, scale_max = 0.0;
  for (int draw = 0; draw < options.normalization_draws; ++draw) {
    const int rows = random_int(rng, 1, 6), cols = random_int(rng, 1, 15);
    const Matrix p = softmax(random_matrix(rows, cols, rng, 3.0), 1);
    for (Eigen::Index i = 0; i < p.rows(); ++i) softmax_err = std::max(softmax_err, std::abs(p.row(i).sum() - 1.0));
    softmax_open = softmax_open && (p.array() > 0.0).all() && ((p.array() < 1.0).all() || cols == 1);

    const int t = random_int(rng, 1, 8), c = 2 * random_int(rng, 1, 4);
    TemporalAttentionParams tp = make_temporal_attention(t, rng);
    tp.bias = random_row(t, rng);
    TemporalAttentionCache tc;
    temporal_attention(random_matrix(t, c, rng), tp, &tc);
    for (Eigen::Index j = 0; j < tc.attention.cols(); ++j)
      attn_err = std::max(attn_err, std::abs(tc.attention.col(j).sum() - 1.0));

    ChannelAttentionParams cp = make_channel_attention(c, 2, rng);
    cp.b1 = random_row(cp.b1.size(), rng);
    cp.b2 = random_row(c, rng);
    ChannelAttentionCache cc;
    channel_attention(random_matrix(t, c, rng), cp, &cc);
    scale_min = std::min(scale_min, cc.scale.minCoeff());
    scale_max = std::max(scale_max, cc.scale.maxCoeff());
    scale_open = scale_open && (cc.scale.array() > 0.0).all() && (cc.scale.array() < 1.0).all();
  }

  // Standardization of a random table.
  Matrix table = random_matrix(50, 6, rng, 4.0);
  table.col(0).setConstant(3.25);
  const Matrix z = apply_standardize(table, fit_standardize(table));
  double std_err = std::abs(z.col(0).cwiseAbs().maxCoeff());
  for (Eigen::Index j = 1; j < z.cols(); ++j) {
    const double mean = z.col(j).mean();
    const double sd = std::sqrt((z.col(j).array() - mean).square().mean());
    std_err = std::max({std_err, std::abs(mean), std::abs(sd - 1.0)});
  }

  auto fmt = [](double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
  };
  return {
      {"normalization", "softmax_rows", softmax_err <= 1e-12 && softmax_open, softmax_err,
       "max |sum - 1| " + fmt(softmax_err) + (softmax_open ? "" : ", entry outside (0,1)")},
      {"normalization", "temporal_attention_weights", attn_err <= 1e-12, attn_err, "max |sum - 1| " + fmt(attn_err)},
      {"normalization", "channel_attention_scale", scale_open, 0.0,
       "range [" + fmt(scale_min) + ", " + fmt(scale_max) + "]"},
      {"normalization", "standardize", std_err <= 1e-9, std_err, "max deviation " + fmt(std_err)},
  };
}

std::vector<CheckResult> run_metric_checks(const SelfcheckOptions& options) {
  Rng rng(options.seed, 0x3E);
  double worst = 0.0;
  bool weighted_exact = true;
  for (int trial = 0; trial < options.metric_trials; ++trial) {
    const int classes = random_int(rng, 2, 15);
    const int n = random_int(rng, 1, 200);
    std::vector<int> yt(static_cast<std::size_t>(n)), yp(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      yt[static_cast<std::size_t>(i)] = random_int(rng, 0, classes - 1);
      // Bias toward correct predictions so precision/recall are not all tiny.
      yp[static_cast<std::size_t>(i)] = rng.uniform() < 0.6 ? yt[static_cast<std::size_t>(i)] : random_int(rng, 0, classes - 1);
    }
    const ClassificationReport r = report(confusion(yt, yp, classes));

    // Recount straight from the label pairs.
    double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0, w_p = 0.0, w_f = 0.0;
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += yt[static_cast<std::size_t>(i)] == yp[static_cast<std::size_t>(i)];
    for (int c = 0; c < classes; ++c) {
      int tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        const bool t = yt[static_cast<std::size_t>(i)] == c, p = yp[static_cast<std::size_t>(i)] == c;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
      }
      const double prec = tp + fp ? double(tp) / (tp + fp) : 0.0;
      const double rec = tp + fn ? double(tp) / (tp + fn) : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      const auto& m = r.per_class[static_cast<std::size_t>(c)];
      worst = std::max({worst, std::abs(m.precision - prec), std::abs(m.recall - rec), std::abs(m.f1 - f1),
                        std::abs(double(m.support - (tp + fn)))});
      macro_p += prec;
      macro_r += rec;
      macro_f += f1;
      w_p += (tp + fn) * prec;
      w_f += (tp + fn) * f1;
    }
    worst = std::max({worst, std::abs(r.accuracy - double(correct) / n), std::abs(r.macro.precision - macro_p / classes),
                      std::abs(r.macro.recall - macro_r / classes), std::abs(r.macro.f1 - macro_f / classes),
                      std::abs(r.weighted.precision - w_p / n), std::abs(r.weighted.f1 - w_f / n)});
    weighted_exact = weighted_exact && r.weighted.recall == r.accuracy;
  }
  std::ostringstream d;
  d << "max abs diff " << std::scientific << std::setprecision(2) << worst << " over " << options.metric_trials << " trials";
  return {{"metrics", "report_vs_recount", worst <= 1e-12, worst, d.str()},
          {"metrics", "weighted_recall_equals_accuracy", weighted_exact, 0.0, weighted_exact ? "exact" : "mismatch"}};
}

bool SelfcheckReport::all_passed() const {
  for (const auto& r : results)
    if (!r.passed) return false;
  return !results.empty();
}

void SelfcheckReport::print(std::ostream& out) const {
  for (const auto& r : results)
    out << (r.passed ? "PASS " : "FAIL ") << r.suite << "/" << r.name << "  " << r.detail << "\n";
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.passed;
  out << (failed ? "selfcheck FAILED: " : "selfcheck passed: ") << (results.size() - failed) << "/" << results.size()
      << " checks in " << std::fixed << std::setprecision(2) << seconds << " s\n";
}

SelfcheckReport run_selfcheck(const SelfcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  SelfcheckReport rep;
  for (auto&& part : {run_gradient_checks(options), run_normalization_checks(options), run_metric_checks(options)})
    rep.results.insert(rep.results.end(), part.begin(), part.end());
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace cstafnet
