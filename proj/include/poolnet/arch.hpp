#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "poolnet/network.hpp"

namespace poolnet {

/// Canonical names accepted by build_spec, in a stable order. Lookup is
/// case-insensitive ("a-lenet5-a" == "A-LeNet5-a").
const std::vector<std::string> &arch_names();

/// Canonical spelling of a name; throws std::invalid_argument for unknown names.
std::string canonical_arch_name(std::string_view name);

/// VGG family: 3x3 convs, padding 1, batch norm + ReLU.
/// LeNet family: 5x5 convs, padding 0, ReLU, no batch norm.
ArchSpec build_spec(std::string_view name);

/// Exact trainable-parameter total (conv filters and biases, batch-norm
/// gamma/beta, FC weights and biases).
std::size_t param_count(const ArchSpec &spec);

} // namespace poolnet
