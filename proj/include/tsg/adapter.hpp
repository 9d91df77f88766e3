#pragma once

#include <vector>

#include "tsg/tensor.hpp"

namespace tsg {

// Sentence-conditioned adapter block. The inner branch modulates the
// running backbone feature and feeds the next layer; the outer branch
// emits a spatially compressed skip feature summed at aggregation. With
// text_free set, both modulations become the identity (an all-ones
// vector), keeping the parameter count unchanged.
struct ScadaBlock {
  int d = 0;
  int gamma = 4;
  int beta = 2;
  bool text_free = false;

  // inner branch
  Tensor fc_down_w, fc_down_b;            // [d/g, d], [d/g]
  Tensor fc_sentence_inner_w, fc_sentence_inner_b;
  Tensor dw_kernel;                       // [d/g, k]
  Tensor fc_up_w, fc_up_b;                // [d, d/g], [d]  (zero init)

  // outer branch
  Tensor conv_down_w, conv_down_b;        // [d/g, d, 1, beta, beta]
  Tensor fc_sentence_outer_w, fc_sentence_outer_b;
  Tensor conv_up_w, conv_up_b;            // [d, d/g, 1, 1, 1]  (zero init)

  // x[d,t,h,w], q[d] -> x[d,t,h,w] with residual
  Tensor inner_branch(const Tensor& x, const Tensor& q) const;
  // x[d,t,h,w], q[d] -> [d,t]
  Tensor outer_branch(const Tensor& x, const Tensor& q) const;
};

// F = layer_normalize(x_b + sum(outers)) over the channel axis.
Tensor aggregate(const Tensor& x_b, const std::vector<Tensor>& outers);

}  // namespace tsg
