#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "gradcheck.hpp"
#include "tsg/adapter.hpp"
#include "tsg/errors.hpp"
#include "tsg/losses.hpp"
#include "tsg/model.hpp"
#include "tsg/ops.hpp"
#include "tsg/trainer.hpp"

using namespace tsg;
using gradcheck::max_grad_rel_err;
using gradcheck::random_tensor;

namespace {

ModelConfig tiny_model_config(bool use_adapters = true, bool text_free = false) {
  ModelConfig m;
  m.vocab = 6;
  m.d = 8;
  m.input_channels = 2;
  m.backbone_widths = {4, 8, 8};
  m.strided_blocks = {0};
  m.insertion_points = {1, 2};
  m.gamma = 4;
  m.beta = 2;
  m.dwconv_kernel = 3;
  m.use_adapters = use_adapters;
  m.text_free = text_free;
  m.frozen_backbone = true;
  m.anchor_scales = {2, 4};
  return m;
}

Tensor tiny_frames(uint64_t seed = 77) {
  Rng rng(seed);
  Tensor f = Tensor::zeros({2, 8, 4, 4});
  for (int64_t i = 0; i < f.numel(); ++i) f.data()[i] = rng.uniform(-1.0, 1.0);
  return f;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), static_cast<size_t>(a.numel()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("encode_sentence pooling") {
  GroundingModel model(tiny_model_config(), 3);
  Tensor one = model.encode_sentence({2});
  Tensor dup = model.encode_sentence({2, 2});
  CHECK(bit_equal(one, dup));

  Tensor ab = model.encode_sentence({1, 4});
  Tensor ba = model.encode_sentence({4, 1});
  for (int64_t i = 0; i < ab.numel(); ++i)
    CHECK(ab.data()[i] == doctest::Approx(ba.data()[i]).epsilon(1e-12));

  CHECK_THROWS_AS(model.encode_sentence({99}), InputError);
}

TEST_CASE("plain backbone forward without adapters") {
  GroundingModel model(tiny_model_config(false), 3);
  Tensor q = model.encode_sentence({1});
  auto f = model.encode_video(tiny_frames(), q);
  CHECK(f.outers.empty());
  CHECK(f.x_b.shape() == Shape{8, 8});

  auto f2 = model.encode_video(tiny_frames(), q);
  CHECK(bit_equal(f.x_b, f2.x_b));  // deterministic forward
}

TEST_CASE("zero-initialized adapters leave the backbone output bit-identical") {
  GroundingModel plain(tiny_model_config(false), 3);
  GroundingModel adapted(tiny_model_config(true), 3);
  Tensor frames = tiny_frames();
  Tensor qp = plain.encode_sentence({1, 3});
  Tensor qa = adapted.encode_sentence({1, 3});
  CHECK(bit_equal(qp, qa));

  auto fp = plain.encode_video(frames, qp);
  auto fa = adapted.encode_video(frames, qa);
  REQUIRE(fa.outers.size() == 2);
  CHECK(bit_equal(fp.x_b, fa.x_b));
  CHECK(bit_equal(plain.fuse(fp), adapted.fuse(fa)));
  for (const Tensor& o : fa.outers)
    for (int64_t i = 0; i < o.numel(); ++i) CHECK(o.data()[i] == 0.0);
}

namespace {
// Adapters initialize inert (zero up-projections); give those weights
// generic values so gradients and query dependence are observable.
void randomize_up_projections(GroundingModel& model, uint64_t seed) {
  Rng rng(seed);
  for (auto& p : model.parameters())
    if (p.name.find("fc_up") != std::string::npos ||
        p.name.find("conv3d_up") != std::string::npos)
      for (int64_t i = 0; i < p.tensor.numel(); ++i)
        p.tensor.data()[i] = 0.3 * rng.normal();
}
}  // namespace

TEST_CASE("frozen backbone gets no gradient while adapters do") {
  GroundingModel model(tiny_model_config(), 5);
  randomize_up_projections(model, 100);
  Tensor frames = tiny_frames();
  Tensor q = model.encode_sentence({0, 2});
  auto f = model.encode_video(frames, q);
  Tensor loss = sum_all(mul(model.fuse(f), model.fuse(f)));
  for (auto& p : model.parameters()) p.tensor.zero_grad();
  backward(loss);

  double adapter_grad = 0, backbone_grad = 0;
  bool backbone_requires = false;
  for (const auto& p : model.parameters()) {
    if (p.name.rfind("scada.", 0) == 0 && p.name.find("fc_down") != std::string::npos)
      for (double g : p.tensor.grad()) adapter_grad += std::abs(g);
    if (p.name.rfind("backbone.", 0) == 0) {
      backbone_requires |= p.tensor.requires_grad();
      for (double g : p.tensor.grad()) backbone_grad += std::abs(g);
    }
  }
  CHECK(!backbone_requires);
  CHECK(backbone_grad == 0.0);
  CHECK(adapter_grad > 0.0);
}

TEST_CASE("a training step leaves frozen backbone parameters bitwise unchanged") {
  GroundingModel model(tiny_model_config(), 5);
  std::vector<std::vector<double>> before;
  for (const auto& p : model.parameters())
    if (p.name.rfind("backbone.", 0) == 0) before.push_back(p.tensor.values());

  Tensor frames = tiny_frames();
  Tensor q = model.encode_sentence({0});
  auto f = model.encode_video(frames, q);
  Tensor loss = sum_all(mul(model.fuse(f), model.fuse(f)));
  auto trainable = model.trainable_parameters();
  AdamW opt(1e-2, 0.01);
  AdamW::zero_grads(trainable);
  backward(loss);
  opt.step(trainable);

  size_t i = 0;
  for (const auto& p : model.parameters())
    if (p.name.rfind("backbone.", 0) == 0) {
      CHECK(std::memcmp(before[i].data(), p.tensor.data(),
                        before[i].size() * sizeof(double)) == 0);
      ++i;
    }
}

TEST_CASE("inner branch is the residual identity when fc_up is zero") {
  GroundingModel model(tiny_model_config(), 7);
  const ScadaBlock& a = model.adapters()[0];
  Rng rx(12), rq(13);
  Tensor x = random_tensor({8, 4, 2, 2}, rx, false);
  Tensor q = random_tensor({8}, rq, false);
  Tensor y = a.inner_branch(x, q);
  CHECK(bit_equal(y, x));
}

TEST_CASE("zero sentence projection reduces both branches to their base case") {
  GroundingModel model(tiny_model_config(), 7);
  ScadaBlock a = model.adapters()[0];
  // zero modulation plus zero biases: inner output must be exactly x
  a.fc_sentence_inner_w = Tensor::zeros(a.fc_sentence_inner_w.shape());
  a.fc_sentence_inner_b = Tensor::zeros(a.fc_sentence_inner_b.shape());
  a.fc_down_b = Tensor::zeros(a.fc_down_b.shape());
  Rng rx(14), rq(15);
  Tensor x = random_tensor({8, 4, 2, 2}, rx, false);
  Tensor q = random_tensor({8}, rq, false);
  CHECK(bit_equal(a.inner_branch(x, q), x));

  // conv3d_up at zero: outer branch output is exactly zero
  Tensor out = a.outer_branch(x, q);
  CHECK(out.shape() == Shape{8, 4});
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0);
}

TEST_CASE("inner branch depends on q only through the sentence projection") {
  GroundingModel model(tiny_model_config(), 9);
  randomize_up_projections(model, 101);
  ScadaBlock a = model.adapters()[0];
  // constant projection: different q, same modulation vector
  a.fc_sentence_inner_w = Tensor::zeros(a.fc_sentence_inner_w.shape());
  Rng rng(21);
  Tensor x = random_tensor({8, 4, 2, 2}, rng, false);
  Tensor q1 = random_tensor({8}, rng, false);
  Tensor q2 = random_tensor({8}, rng, false);
  CHECK(bit_equal(a.inner_branch(x, q1), a.inner_branch(x, q2)));

  // generic projection: different q changes the output
  const ScadaBlock& b = model.adapters()[0];
  CHECK(!bit_equal(b.inner_branch(x, q1), b.inner_branch(x, q2)));
}

TEST_CASE("inner and outer branch gradients w.r.t. q match finite differences") {
  GroundingModel model(tiny_model_config(), 10);
  randomize_up_projections(model, 104);
  const ScadaBlock& a = model.adapters()[0];
  Rng rng(23);
  Tensor x = random_tensor({8, 4, 2, 2}, rng, false);
  Tensor q = random_tensor({8}, rng, true);
  Tensor wi = random_tensor({8, 4, 2, 2}, rng, false);
  Tensor wo = random_tensor({8, 4}, rng, false);
  CHECK(max_grad_rel_err([&] { return sum_all(mul(a.inner_branch(x, q), wi)); }, {q}) < 1e-4);
  CHECK(max_grad_rel_err([&] { return sum_all(mul(a.outer_branch(x, q), wo)); }, {q}) < 1e-4);

  // and w.r.t. the outer conv-down weights
  Tensor cw = model.adapters()[0].conv_down_w;
  CHECK(max_grad_rel_err([&] { return sum_all(mul(a.outer_branch(x, q), wo)); }, {cw}, 1e-5, 24) < 1e-4);
}

TEST_CASE("text-free adapters ignore the query but keep the parameter count") {
  GroundingModel with_text(tiny_model_config(true, false), 11);
  GroundingModel text_free(tiny_model_config(true, true), 11);
  randomize_up_projections(with_text, 102);
  randomize_up_projections(text_free, 102);
  CHECK(with_text.parameters().size() == text_free.parameters().size());
  int64_t count_a = 0, count_b = 0;
  for (const auto& p : with_text.parameters()) count_a += p.tensor.numel();
  for (const auto& p : text_free.parameters()) count_b += p.tensor.numel();
  CHECK(count_a == count_b);

  Rng rng(22);
  Tensor x = random_tensor({8, 4, 2, 2}, rng, false);
  Tensor q1 = random_tensor({8}, rng, false);
  Tensor q2 = random_tensor({8}, rng, false);
  const ScadaBlock& tf = text_free.adapters()[0];
  CHECK(bit_equal(tf.inner_branch(x, q1), tf.inner_branch(x, q2)));
  CHECK(bit_equal(tf.outer_branch(x, q1), tf.outer_branch(x, q2)));
  const ScadaBlock& wt = with_text.adapters()[0];
  CHECK(!bit_equal(wt.inner_branch(x, q1), wt.inner_branch(x, q2)));
}

TEST_CASE("aggregate forced cases") {
  Rng rng(31);
  Tensor xb = random_tensor({4, 6}, rng, false);
  Tensor f_empty = aggregate(xb, {});
  CHECK(bit_equal(f_empty, layer_normalize(xb, 0)));

  Tensor neg = scale(xb, -1.0);
  Tensor f_zero = aggregate(xb, {neg});
  for (int64_t i = 0; i < f_zero.numel(); ++i) CHECK(f_zero.data()[i] == 0.0);

  Tensor u = random_tensor({4, 6}, rng, false);
  Tensor two = aggregate(xb, {u, u});
  Tensor direct = layer_normalize(add(xb, scale(u, 2.0)), 0);
  for (int64_t i = 0; i < two.numel(); ++i)
    CHECK(two.data()[i] == doctest::Approx(direct.data()[i]).epsilon(1e-12));
}

TEST_CASE("aggregate rejects shape mismatch") {
  Tensor xb = Tensor::zeros({4, 6});
  Tensor bad = Tensor::zeros({4, 5});
  CHECK_THROWS_AS(aggregate(xb, {bad}), DimensionError);
}

TEST_CASE("adapter insertion at a non-matching width is a dimension error") {
  ModelConfig m = tiny_model_config();
  m.insertion_points = {0};  // block 0 emits 4 channels, d = 8
  CHECK_THROWS_AS(GroundingModel(m, 1), DimensionError);
}

TEST_CASE("default-size adapter parameter count stays under a quarter of the backbone") {
  ModelConfig m;  // defaults: d=64, widths 16/32/64/64, two insertion points
  GroundingModel model(m, 1);
  int64_t scada = 0, backbone = 0;
  for (const auto& p : model.parameters()) {
    if (p.name.rfind("scada.", 0) == 0) scada += p.tensor.numel();
    if (p.name.rfind("backbone.", 0) == 0) backbone += p.tensor.numel();
  }
  CHECK(scada > 0);
  CHECK(static_cast<double>(scada) < 0.25 * static_cast<double>(backbone));
}

TEST_CASE("composite gradients match finite differences through the whole stack") {
  GroundingModel model(tiny_model_config(), 17);
  randomize_up_projections(model, 103);
  Tensor frames = tiny_frames(99);
  const std::vector<int> tokens{1, 4};
  const MomentSegment gt{2, 6};

  std::vector<MomentSegment> anchors = model.anchors_for(8).anchors;
  anchors.push_back(gt);
  SupervisionTargets targets = build_targets(gt, anchors, 8, 0.7);

  auto forward = [&] {
    Tensor q = model.encode_sentence(tokens);
    auto f = model.encode_video(frames, q);
    HeadOutput out = model.head_forward(model.fuse(f), q, anchors);
    return total_loss(out, targets);
  };

  std::vector<Tensor> leaves;
  for (const auto& p : model.trainable_parameters()) leaves.push_back(p.tensor);
  double err = max_grad_rel_err(forward, leaves, 1e-5, 4, 2027);
  CHECK(err < 1e-4);
}
