// SPDX-License-Identifier: Apache-2.0
#pragma once

// A batch of aligned target/source inputs. Row b of x_source is the same
// content as row b of x_target, captured by a different device; labels are
// one-hot or soft rows over the class axis.

#include "ltk/tensor.hpp"

namespace ltk {

struct PairedBatch {
  Tensor x_target;  // [B, C, H, W]
  Tensor y;         // [B, K]
  Tensor x_source;  // [B, C, H, W]; undefined when training without a source
};

}  // namespace ltk
