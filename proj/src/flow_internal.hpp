// Copyright 2026 the isoret authors
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

#include <vector>

#include "isoret/flows.hpp"

namespace isoret::flow {

/// Batch nll recorded on the graph with `leaves` standing in for the model's
/// parameters (same order). Only the model's structure is read.
ad::Var forward_loss(const FlowModel& model, const std::vector<ad::Var>& leaves, const Tensor& batch);

}  // namespace isoret::flow
