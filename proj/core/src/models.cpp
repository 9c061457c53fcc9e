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

#include "metareg/models.hpp"

#include <array>
#include <cmath>
#include <string>

#include "metareg/ops.hpp"

namespace metareg {

namespace {

// Segment order in the layout; regnet_forward indexes params by these.
enum Seg : std::size_t {
  kEnc1W,
  kEnc1B,
  kEnc2W,
  kEnc2B,
  kEnc3W,
  kEnc3B,
  kBottW,
  kBottB,
  kDec1W,
  kDec1B,
  kDec2W,
  kDec2B,
  kHeadW,
  kHeadB,
  kSegCount
};

void require_divisible(const Extent& e) {
  if (e.x % 4 || e.y % 4 || e.z % 4)
    throw ShapeError("registration network needs an extent divisible by 4, got " + to_string(e));
}

}  // namespace

void validate(const RegNetConfig& c) {
  for (int w : {c.enc1, c.enc2, c.enc3, c.bottleneck, c.dec1, c.dec2})
    if (w <= 0) throw DomainError("RegNet channel widths must be positive");
  if (!(c.leaky_slope >= 0.0 && c.leaky_slope < 1.0)) throw DomainError("leaky slope must lie in [0,1)");
}

std::shared_ptr<const Layout> regnet_layout(const RegNetConfig& c) {
  validate(c);
  auto layout = std::make_shared<Layout>();
  auto conv = [&](const std::string& name, int out, int in, int k) {
    layout->add(name + ".weight", {out, in, k, k, k});
    layout->add(name + ".bias", {out});
  };
  conv("enc1", c.enc1, 2, 3);
  conv("enc2", c.enc2, c.enc1, 3);
  conv("enc3", c.enc3, c.enc2, 3);
  conv("bottleneck", c.bottleneck, c.enc3, 3);
  conv("dec1", c.dec1, c.bottleneck + c.enc2, 3);
  conv("dec2", c.dec2, c.dec1 + c.enc1, 3);
  conv("head", 3, c.dec2, 1);
  return layout;
}

double hidden_init_variance(int fan_in, double leaky_slope) {
  return 2.0 / ((1.0 + leaky_slope * leaky_slope) * static_cast<double>(fan_in));
}

RegNet init_regnet(const RegNetConfig& config, Rng& rng) {
  RegNet net{config, ParamVector(regnet_layout(config))};
  const Layout& layout = net.params.layout();
  for (std::size_t i = 0; i < layout.segments().size(); ++i) {
    const Segment& s = layout.segment(i);
    if (s.dims.size() != 5 || i == kHeadW) continue;  // biases and head stay zero
    const int fan_in = s.dims[1] * s.dims[2] * s.dims[3] * s.dims[4];
    const double bound = std::sqrt(3.0 * hidden_init_variance(fan_in, config.leaky_slope));
    for (float& w : net.params.segment(i)) w = static_cast<float>(rng.uniform(-bound, bound));
  }
  return net;
}

template <typename T>
Var regnet_forward(BasicTape<T>& tape, const RegNetConfig& c, std::span<const Var> p, Var moving, Var fixed) {
  if (p.size() != kSegCount) throw ShapeError("regnet_forward: expected " + std::to_string(kSegCount) + " parameter Vars");
  const auto& mv = tape.value(moving);
  const auto& fv = tape.value(fixed);
  if (mv.extent() != fv.extent())
    throw ShapeError("moving and fixed grids differ: " + to_string(mv.extent()) + " vs " + to_string(fv.extent()));
  require_divisible(mv.extent());
  const T slope = static_cast<T>(c.leaky_slope);
  auto as_channel = [&](Var v) {
    const auto& t = tape.value(v);
    if (t.rank() == 4) return v;
    const Extent e = t.extent();
    return reshape(tape, v, {1, e.x, e.y, e.z});
  };
  auto block = [&](Var x, std::size_t w, int stride) {
    return leaky_relu(tape, conv3d(tape, x, p[w], p[w + 1], stride), slope);
  };
  const Var x = concat_channels(tape, as_channel(moving), as_channel(fixed));
  const Var e1 = block(x, kEnc1W, 1);
  const Var e2 = block(e1, kEnc2W, 2);
  const Var e3 = block(e2, kEnc3W, 2);
  const Var b = block(e3, kBottW, 1);
  const Var d1 = block(concat_channels(tape, upsample2(tape, b), e2), kDec1W, 1);
  const Var d2 = block(concat_channels(tape, upsample2(tape, d1), e1), kDec2W, 1);
  return conv3d(tape, d2, p[kHeadW], p[kHeadB], 1);
}

template Var regnet_forward<float>(Tape&, const RegNetConfig&, std::span<const Var>, Var, Var);
template Var regnet_forward<double>(Tape64&, const RegNetConfig&, std::span<const Var>, Var, Var);

Var regnet_forward(Tape& tape, const RegNet& net, Var moving, Var fixed) {
  const std::vector<Var> params = bind_parameters(tape, net.params);
  return regnet_forward<float>(tape, net.config, params, moving, fixed);
}

DisplacementField predict_ddf(const RegNet& net, const Volume& moving, const Volume& fixed) {
  Tape tape;
  std::vector<Var> params;
  for (std::size_t i = 0; i < net.params.layout().segments().size(); ++i)
    params.push_back(tape.constant(net.params.tensor(i)));
  const Var m = tape.constant(moving.grid);
  const Var f = tape.constant(fixed.grid);
  const Var out = regnet_forward<float>(tape, net.config, params, m, f);
  return DisplacementField{tape.value(out)};
}

DirectDdfModel DirectDdfModel::zeros(Extent e) {
  auto layout = std::make_shared<Layout>();
  layout->add("ddf", {3, e.x, e.y, e.z});
  return DirectDdfModel{ParamVector(std::move(layout))};
}

DisplacementField DirectDdfModel::field() const { return DisplacementField{params.tensor(0)}; }

DirectDdfModel DirectDdfModel::from_field(const DisplacementField& f) {
  DirectDdfModel m = zeros(f.extent());
  std::copy(f.vectors.storage().begin(), f.vectors.storage().end(), m.params.segment(0).begin());
  return m;
}

Var direct_ddf_forward(Tape& tape, const DirectDdfModel& model) {
  if (model.params.layout().segments().size() != 1) throw ShapeError("direct DDF model must have one segment");
  return tape.parameter(model.params.tensor(0), 0);
}

}  // namespace metareg
