#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ct/checkpoint.hpp"
#include "ct/model.hpp"
#include "ct/rng.hpp"

using ct::Mode;
using ct::Shape;
using ct::Tensor;
using ct::VariantConfig;

namespace {

// small architecture for fast block tests
VariantConfig mini_config(std::size_t heads = 2, std::size_t head_dim = 2,
                          std::size_t classes = 3) {
  VariantConfig cfg;
  cfg.name = "mini";
  cfg.heads = heads;
  cfg.head_dim = head_dim;
  cfg.local_channels = heads * head_dim;
  cfg.expanded_channels = cfg.local_channels;
  cfg.final_channels = 8;
  cfg.num_classes = classes;
  cfg.time_frames = 8;
  cfg.mesh_size = 12;
  cfg.spatial_kernel = 4;
  cfg.spatial_stride = 4;
  cfg.fc1 = 20;
  cfg.fc2 = 10;
  cfg.validate();
  return cfg;
}

template <typename T>
Tensor<T> randn(Shape shape, std::uint64_t stream) {
  ct::CounterRng rng(123, stream);
  std::vector<T> v(ct::numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.next_normal());
  return Tensor<T>::from_vector(std::move(shape), std::move(v));
}

template <typename T>
void zero_projections(ct::ConvTransformerModel<T>& model) {
  for (auto& [name, p] : model.parameters())
    if (name.find(".q.weight") != std::string::npos ||
        name.find(".k.weight") != std::string::npos ||
        name.find(".v.weight") != std::string::npos ||
        name.find("cfe.") != std::string::npos)
      for (auto& v : p.data()) v = T(0);
}

}  // namespace

TEST_CASE("parameter totals match the published sizes within 5%") {
  struct Row {
    const char* name;
    double expected;
  };
  const Row rows[] = {{"slim", 4.56e6}, {"fit", 11.52e6}, {"wide", 23.55e6}};
  for (const auto& row : rows) {
    auto cfg = VariantConfig::by_name(row.name, 72);
    ct::ConvTransformerModel<float> model(cfg, 1);
    const double count = static_cast<double>(model.parameter_count());
    CHECK(std::abs(count - row.expected) / row.expected < 0.05);
  }
  // exact classifier arithmetic for slim/K=72: encoder emits F x 1 x T
  auto cfg = VariantConfig::slim(72);
  ct::ConvTransformerModel<float> model(cfg, 1);
  const std::size_t ft = cfg.final_channels * cfg.time_frames;
  const std::size_t expect_classifier =
      ft * 500 + 500 + 500 * 100 + 100 + 100 * 72 + 72;
  CHECK(model.parameter_breakdown().at("classifier") == expect_classifier);
}

TEST_CASE("same seed builds identical parameter bytes") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<float> a(cfg, 99), b(cfg, 99), c(cfg, 100);
  auto &pa = a.parameters(), &pb = b.parameters(), &pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff_c = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].first == pb[i].first);
    auto da = pa[i].second.data(), db = pb[i].second.data(),
         dc = pc[i].second.data();
    for (std::size_t j = 0; j < da.size(); ++j) {
      CHECK(da[j] == db[j]);
      any_diff_c = any_diff_c || da[j] != dc[j];
    }
  }
  CHECK(any_diff_c);
}

TEST_CASE("lfe produces the documented patch layout") {
  auto cfg = VariantConfig::slim(6, 8);
  CHECK(cfg.patch_grid() == 7);
  CHECK(cfg.patches() == 49);
  ct::ConvTransformerModel<double> model(cfg, 3);
  auto x = randn<double>({2, 1, 32, 32, 8}, 1);
  auto y = model.lfe_forward(x, Mode::train);
  CHECK(y.shape() == Shape{2, 8, 49, 8});

  // zero input with zero bias and eval-mode default stats stays zero
  Tensor<double> zero(Shape{1, 1, 32, 32, 8}, 0.0);
  auto yz = model.lfe_forward(zero, Mode::eval);
  for (double v : yz.data()) CHECK(v == doctest::Approx(0.0));

  CHECK_THROWS(model.lfe_forward(randn<double>({1, 1, 16, 16, 8}, 2),
                                 Mode::eval));
}

TEST_CASE("attention head: singleton patch gives identity attention") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<double> model(cfg, 4);
  auto x = randn<double>({2, cfg.local_channels, 1, cfg.time_frames}, 3);
  ct::ConvTransformerModel<double>::ForwardTrace trace;
  trace.capture_ct = 1;
  auto out = model.attention_head(x, 1, 0, &trace);
  REQUIRE(trace.attention.size() == 1);
  for (double a : trace.attention[0].data())
    CHECK(a == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.shape() == Shape{2, cfg.head_dim, 1, cfg.time_frames});
}

TEST_CASE("attention head: zero queries average the value rows") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<double> model(cfg, 5);
  for (auto& [name, p] : model.parameters())
    if (name == "ct1.head0.q.weight")
      for (auto& v : p.data()) v = 0.0;
  const std::size_t p = 5, t = cfg.time_frames, d = cfg.head_dim;
  auto x = randn<double>({1, cfg.local_channels, p, t}, 6);
  ct::ConvTransformerModel<double>::ForwardTrace trace;
  trace.capture_ct = 1;
  auto out = model.attention_head(x, 1, 0, &trace);
  // uniform attention
  for (double a : trace.attention[0].data())
    CHECK(a == doctest::Approx(1.0 / p).epsilon(1e-9));
  // each output patch = mean over patches of the value projection
  ct::NoGradGuard guard;
  Tensor<double> vproj;
  {
    // recompute v projection with the public pieces: zero q only affected q
    auto& params = model.parameters();
    Tensor<double> vw;
    for (auto& [name, pp] : params)
      if (name == "ct1.head0.v.weight") vw = pp;
    vproj = ct::conv_pt(x, vw, 0, 0);
  }
  for (std::size_t dd = 0; dd < d; ++dd)
    for (std::size_t tt = 0; tt < t; ++tt) {
      double mean = 0;
      for (std::size_t pp = 0; pp < p; ++pp)
        mean += vproj.at({0, dd, pp, tt});
      mean /= static_cast<double>(p);
      for (std::size_t pp = 0; pp < p; ++pp)
        CHECK(out.at({0, dd, pp, tt}) == doctest::Approx(mean).epsilon(1e-9));
    }
}

TEST_CASE("attention head matches a dense transcription") {
  auto cfg = mini_config(2, 2);
  ct::ConvTransformerModel<double> model(cfg, 7);
  const std::size_t c = cfg.local_channels, p = 3, t = 2, d = cfg.head_dim;
  auto x = randn<double>({1, c, p, t}, 8);

  Tensor<double> wq, wk, wv;
  for (auto& [name, pp] : model.parameters()) {
    if (name == "ct1.head1.q.weight") wq = pp;
    if (name == "ct1.head1.k.weight") wk = pp;
    if (name == "ct1.head1.v.weight") wv = pp;
  }
  auto project = [&](const Tensor<double>& w) {
    // q[dd][pp][tt] = sum_c w[dd][c] x[c][pp][tt], folded to P x (D*T)
    std::vector<std::vector<double>> m(p, std::vector<double>(d * t, 0.0));
    for (std::size_t dd = 0; dd < d; ++dd)
      for (std::size_t pp = 0; pp < p; ++pp)
        for (std::size_t tt = 0; tt < t; ++tt) {
          double acc = 0;
          for (std::size_t cc = 0; cc < c; ++cc)
            acc += w.at({dd, cc, 0, 0}) * x.at({0, cc, pp, tt});
          m[pp][dd * t + tt] = acc;
        }
    return m;
  };
  auto qm = project(wq), km = project(wk), vm = project(wv);
  const double scl = 1.0 / std::sqrt(static_cast<double>(d * t));
  std::vector<std::vector<double>> ctx(p, std::vector<double>(d * t, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<double> row(p);
    double mx = -1e300;
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0;
      for (std::size_t kk = 0; kk < d * t; ++kk) acc += qm[i][kk] * km[j][kk];
      row[j] = acc * scl;
      mx = std::max(mx, row[j]);
    }
    double denom = 0;
    for (std::size_t j = 0; j < p; ++j) {
      row[j] = std::exp(row[j] - mx);
      denom += row[j];
    }
    for (std::size_t j = 0; j < p; ++j) row[j] /= denom;
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t kk = 0; kk < d * t; ++kk)
        ctx[i][kk] += row[j] * vm[j][kk];
  }
  auto out = model.attention_head(x, 1, 1);
  for (std::size_t dd = 0; dd < d; ++dd)
    for (std::size_t pp = 0; pp < p; ++pp)
      for (std::size_t tt = 0; tt < t; ++tt)
        CHECK(out.at({0, dd, pp, tt}) ==
              doctest::Approx(ctx[pp][dd * t + tt]).epsilon(1e-6));
}

TEST_CASE("mha block with one head equals that head plus residual norm") {
  auto cfg = mini_config(1, 4);
  ct::ConvTransformerModel<double> model(cfg, 9);
  auto x = randn<double>({2, cfg.local_channels, 5, cfg.time_frames}, 10);
  ct::ConvTransformerModel<double>::ForwardTrace trace;
  trace.capture_ct = 1;
  auto y = model.mha_block(x, 1, Mode::eval, &trace);
  CHECK(y.shape() == x.shape());
  REQUIRE(trace.head_outputs.size() == 1);
  auto single = trace.head_outputs[0];
  auto cat = trace.heads_concat;
  REQUIRE(cat.size() == single.size());
  for (std::size_t i = 0; i < cat.size(); ++i)
    CHECK(cat.data()[i] == single.data()[i]);
}

TEST_CASE("zero-kernel CT module reduces to batch normalization") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<double> model(cfg, 11);
  zero_projections(model);
  // inputs bounded by 1 keep the eps-induced eval-BN deviation below 1e-5
  auto x = randn<double>({2, cfg.local_channels, 9, cfg.time_frames}, 12);
  for (auto& v : x.data()) v = std::tanh(v);
  auto y_mha = model.mha_block(x, 1, Mode::eval);
  auto y_cfe = model.cfe_forward(x, 1, Mode::eval);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(y_mha.data()[i] - x.data()[i]) < 1e-5);
    CHECK(std::abs(y_cfe.data()[i] - x.data()[i]) < 1e-5);
  }
}

TEST_CASE("mha block is equivariant to patch permutations") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<double> model(cfg, 13);
  const std::size_t p = 9;
  auto x = randn<double>({2, cfg.local_channels, p, cfg.time_frames}, 14);
  auto y = model.mha_block(x, 1, Mode::eval);

  std::vector<std::size_t> perm{3, 1, 4, 0, 8, 2, 7, 5, 6};
  auto permute_patches = [&](const Tensor<double>& z) {
    auto out = z.detach();
    for (std::size_t b = 0; b < z.shape()[0]; ++b)
      for (std::size_t c = 0; c < z.shape()[1]; ++c)
        for (std::size_t pp = 0; pp < p; ++pp)
          for (std::size_t t = 0; t < z.shape()[3]; ++t)
            out.at({b, c, pp, t}) = z.at({b, c, perm[pp], t});
    return out;
  };
  auto y_perm = model.mha_block(permute_patches(x), 1, Mode::eval);
  auto y_expect = permute_patches(y);
  for (std::size_t i = 0; i < y_perm.size(); ++i)
    CHECK(std::abs(y_perm.data()[i] - y_expect.data()[i]) < 1e-6);
}

TEST_CASE("forward emits finite class logits with unit softmax rows") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<double> model(cfg, 15);
  auto x = randn<double>({3, 1, 12, 12, cfg.time_frames}, 16);
  auto logits = model.forward(x, Mode::eval);
  CHECK(logits.shape() == Shape{3, cfg.num_classes});
  auto sm = ct::softmax(logits, 1);
  for (std::size_t b = 0; b < 3; ++b) {
    double s = 0;
    for (std::size_t k = 0; k < cfg.num_classes; ++k) s += sm.at({b, k});
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  // eval mode is deterministic
  auto logits2 = model.forward(x, Mode::eval);
  for (std::size_t i = 0; i < logits.size(); ++i)
    CHECK(logits.data()[i] == logits2.data()[i]);
}

TEST_CASE("no parameter is gradient-dead on a random batch") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<double> model(cfg, 17);
  auto x = randn<double>({16, 1, 12, 12, cfg.time_frames}, 18);
  std::vector<std::int64_t> labels;
  for (int i = 0; i < 16; ++i) labels.push_back(i % cfg.num_classes);
  model.zero_grad();
  auto loss = ct::cross_entropy(model.forward(x, Mode::train, 0), labels);
  loss.backward();
  for (auto& [name, p] : model.parameters()) {
    bool any = false;
    for (double g : p.grad()) any = any || g != 0.0;
    INFO(name);
    CHECK(any);
  }
}

TEST_CASE("head collection returns per-head contexts consistent with concat") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<double> model(cfg, 19);
  auto x = randn<double>({2, 1, 12, 12, cfg.time_frames}, 20);
  CHECK_THROWS(model.collect_head_representations(x, 3));
  auto heads = model.collect_head_representations(x, 2);
  REQUIRE(heads.size() == cfg.heads);
  for (const auto& h : heads)
    CHECK(h.shape() == Shape{2, cfg.head_dim, cfg.patches(),
                             cfg.time_frames});
  // concatenation of the returned heads equals the pre-residual concat
  ct::NoGradGuard guard;
  ct::ConvTransformerModel<double>::ForwardTrace trace;
  trace.capture_ct = 2;
  (void)model.forward(x, Mode::eval, 0, &trace);
  auto cat = ct::concat(heads, 1);
  REQUIRE(cat.size() == trace.heads_concat.size());
  for (std::size_t i = 0; i < cat.size(); ++i)
    CHECK(std::abs(cat.data()[i] - trace.heads_concat.data()[i]) < 1e-7);
}

TEST_CASE("checkpoint round trip restores behaviour exactly") {
  auto cfg = mini_config();
  ct::ConvTransformerModel<float> model(cfg, 21);
  auto x = randn<float>({2, 1, 12, 12, cfg.time_frames}, 22);
  auto before = model.forward(x, Mode::eval);
  ct::save_model("model_rt.ctck", model);

  ct::ConvTransformerModel<float> other(cfg, 999);
  ct::load_model("model_rt.ctck", other);
  auto after = other.forward(x, Mode::eval);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(before.data()[i] == after.data()[i]);

  // corrupted magic is rejected
  {
    std::ofstream bad("model_bad.ctck", std::ios::binary);
    bad << "NOPE0000";
  }
  CHECK_THROWS(ct::load_checkpoint("model_bad.ctck"));
}
