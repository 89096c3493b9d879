#include "cloneforge/pu_objective.hpp"

namespace cloneforge {

template BasicPULossValue<float> pu_loss(std::span<const float>, std::span<const float>, float,
                                         const PULossConfig&, PULossGradient<float>*);
template BasicPULossValue<double> pu_loss(std::span<const double>, std::span<const double>, double,
                                          const PULossConfig&, PULossGradient<double>*);

}  // namespace cloneforge
