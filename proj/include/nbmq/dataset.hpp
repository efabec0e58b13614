#pragma once

#include "nbmq/robust_glm.hpp"
#include "nbmq/spatial.hpp"

#include <string>
#include <vector>

namespace nbmq {

/// Area-level counts with identifiers; the design carries an intercept column first.
struct AreaDataset {
    std::vector<std::string> ids;
    std::vector<std::string> covariate_names;
    RegressionDesign design;
};

/// 56-district Scottish lip cancer data; covariate is the agriculture percentage divided by ten.
AreaDataset scottish_lip_cancer();
SpatialStructure scottish_lip_cancer_adjacency();

}  // namespace nbmq
