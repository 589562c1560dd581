#pragma once

// Training trace records: one row per recorded step with the loss, the norm
// of each conv layer's gradient, and the iterate's distance from its
// initialization.

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace circnn {

struct TraceRow {
    std::size_t step = 0;
    double loss = 0.0;
    std::vector<double> layer_grad_norms;
    double dist_from_init = 0.0;
};

struct TrainTrace {
    std::vector<TraceRow> rows; // sorted by step
    double final_loss = 0.0;
    double min_loss = 0.0;
    std::size_t min_loss_step = 0;
    std::size_t steps_run = 0;
};

// Thrown when a training loss exceeds the divergence ceiling; carries the
// trace accumulated up to the aborting step.
class Diverged : public std::runtime_error {
  public:
    Diverged(std::string what, TrainTrace partial)
        : std::runtime_error(std::move(what)), trace(std::move(partial)) {}
    TrainTrace trace;
};

} // namespace circnn
