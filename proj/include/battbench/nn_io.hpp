#pragma once

#include <filesystem>
#include <iosfwd>

#include "battbench/nn.hpp"

namespace battbench::nn {

/// Text checkpoint: schema tag, head, widths, then every weight matrix and
/// bias vector row-major in shortest round-trip decimal form, so that
/// save(load(save(net))) is byte-identical to save(net).
void save_mlp(const Mlp<double>& net, std::ostream& out);
Mlp<double> load_mlp(std::istream& in);

}  // namespace battbench::nn
