#pragma once

#include <vector>

#include "tsg/ops.hpp"
#include "tsg/tensor.hpp"

namespace tsg {

// Learned embedding table with average pooling over tokens.
struct SentenceEncoder {
  Tensor embedding;  // [vocab, d]

  Tensor encode(const std::vector<int>& tokens) const {
    return embedding_mean(embedding, tokens);
  }
};

// conv3d -> channel layer norm -> GELU. Temporal stride is always 1;
// spatial stride 2 on designated blocks.
struct ConvBlock {
  Tensor weight;  // [c_out, c_in, 3, 3, 3]
  Tensor bias;    // [c_out]
  int spatial_stride = 1;

  Tensor forward(const Tensor& x) const {
    Tensor y = conv3d(x, weight, bias,
                      {1, spatial_stride, spatial_stride}, {1, 1, 1});
    return activation(layer_normalize(y, 0), Act::gelu);
  }
};

struct VideoBackbone {
  std::vector<ConvBlock> blocks;
  std::vector<int> insertion_points;  // adapter attaches after these blocks (sorted)
  bool frozen = true;
};

}  // namespace tsg
