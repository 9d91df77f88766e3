#include "tsg/adapter.hpp"

#include "tsg/errors.hpp"
#include "tsg/ops.hpp"

namespace tsg {

Tensor ScadaBlock::inner_branch(const Tensor& x, const Tensor& q) const {
  if (x.rank() != 4 || x.dim(0) != d)
    throw DimensionError("inner_branch: expected [" + std::to_string(d) +
                         ",t,h,w], got " + shape_str(x.shape()));
  if (d % gamma != 0)
    throw ConfigError("channel width " + std::to_string(d) +
                      " is not divisible by gamma " + std::to_string(gamma));
  const int64_t t = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t hw = h * w;
  const int64_t dg = d / gamma;

  // channels-last positions, then squeeze channels
  Tensor xm = reshape(transpose(x, {1, 2, 3, 0}), {t * hw, d});
  Tensor xp = activation(linear(xm, fc_down_w, fc_down_b), Act::gelu);

  Tensor modulated = xp;
  if (!text_free) {
    Tensor sv = linear(q, fc_sentence_inner_w, fc_sentence_inner_b);  // [d/g]
    modulated = mul_axis(xp, sv, 1);
  }
  Tensor normed = layer_normalize(modulated, 1);

  // temporal depthwise conv per spatial location
  Tensor grouped = transpose(reshape(normed, {t, hw, dg}), {2, 1, 0});
  Tensor conved = dwconv1d_grouped(grouped, dw_kernel);
  Tensor xpp = reshape(transpose(conved, {2, 1, 0}), {t * hw, dg});

  Tensor up = activation(linear(xpp, fc_up_w, fc_up_b), Act::gelu);
  Tensor residual = transpose(reshape(up, {t, h, w, d}), {3, 0, 1, 2});
  return add(x, residual);
}

Tensor ScadaBlock::outer_branch(const Tensor& x, const Tensor& q) const {
  if (x.rank() != 4 || x.dim(0) != d)
    throw DimensionError("outer_branch: expected [" + std::to_string(d) +
                         ",t,h,w], got " + shape_str(x.shape()));
  if (x.dim(2) % beta != 0 || x.dim(3) % beta != 0)
    throw ConfigError("spatial size " + std::to_string(x.dim(2)) + "x" +
                      std::to_string(x.dim(3)) + " is not divisible by beta " +
                      std::to_string(beta));

  Tensor down = activation(
      conv3d(x, conv_down_w, conv_down_b, {1, beta, beta}, {0, 0, 0}), Act::gelu);

  Tensor modulated = down;
  if (!text_free) {
    Tensor sv = linear(q, fc_sentence_outer_w, fc_sentence_outer_b);  // [d/g]
    modulated = mul_axis(down, sv, 0);
  }
  Tensor normed = layer_normalize(modulated, 0);

  // restore channels while condensing spatial size further
  Tensor up = activation(
      conv3d(normed, conv_up_w, conv_up_b, {1, 2, 2}, {0, 0, 0}), Act::gelu);
  return spatial_mean(up);
}

Tensor aggregate(const Tensor& x_b, const std::vector<Tensor>& outers) {
  Tensor acc = x_b;
  for (const Tensor& o : outers) acc = add(acc, o);
  return layer_normalize(acc, 0);
}

}  // namespace tsg
