// Copyright 2026 The metareg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <memory>
#include <span>
#include <vector>

#include "metareg/image.hpp"
#include "metareg/param_vector.hpp"
#include "metareg/rng.hpp"
#include "metareg/tape.hpp"

namespace metareg {

/// Channel widths of the encoder-decoder registration network.
///
///   input  : concat(moving, fixed)                 2 ch,  X
///   enc1   : conv3 s1                           enc1 ch,  X
///   enc2   : conv3 s2                           enc2 ch,  X/2
///   enc3   : conv3 s2                           enc3 ch,  X/4
///   bottle : conv3 s1                     bottleneck ch,  X/4
///   dec1   : conv3 s1 on [up(bottle), enc2]     dec1 ch,  X/2
///   dec2   : conv3 s1 on [up(dec1),   enc1]     dec2 ch,  X
///   head   : conv1 linear                          3 ch,  X
///
/// Every hidden conv is followed by a leaky ReLU.
struct RegNetConfig {
  int enc1 = 16;
  int enc2 = 16;
  int enc3 = 32;
  int bottleneck = 32;
  int dec1 = 16;
  int dec2 = 8;
  double leaky_slope = 0.2;

  bool operator==(const RegNetConfig&) const = default;
};

void validate(const RegNetConfig& c);

/// Parameter layout of a RegNet; a pure function of the config.
std::shared_ptr<const Layout> regnet_layout(const RegNetConfig& config);

/// Variance of the uniform fan-in initializer for hidden kernels:
/// 2 / ((1 + slope^2) * fan_in).
double hidden_init_variance(int fan_in, double leaky_slope);

struct RegNet {
  RegNetConfig config;
  ParamVector params;
};

/// Hidden kernels drawn uniformly with hidden_init_variance(); head kernel
/// and every bias are zero, so the untrained network predicts a zero field.
RegNet init_regnet(const RegNetConfig& config, Rng& rng);

/// Records the network on `tape`. `params` are the segment Vars from
/// bind_parameters() (or constants, for inference). Returns the [3,X,Y,Z]
/// displacement field. Extent must be divisible by 4 on every axis.
template <typename T>
Var regnet_forward(BasicTape<T>& tape, const RegNetConfig& config, std::span<const Var> params, Var moving, Var fixed);

/// Convenience wrapper that binds `net.params` as parameter leaves.
Var regnet_forward(Tape& tape, const RegNet& net, Var moving, Var fixed);

/// Inference without gradient bookkeeping.
DisplacementField predict_ddf(const RegNet& net, const Volume& moving, const Volume& fixed);

/// Classical parameterization: the displacement field itself.
struct DirectDdfModel {
  ParamVector params;  // single segment "ddf" [3,X,Y,Z]

  static DirectDdfModel zeros(Extent e);
  DisplacementField field() const;
  static DirectDdfModel from_field(const DisplacementField& f);
};

/// Records the parameters as a leaf and returns it as the field.
Var direct_ddf_forward(Tape& tape, const DirectDdfModel& model);

}  // namespace metareg
