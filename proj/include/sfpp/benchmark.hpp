#pragma once

#include <functional>
#include <vector>

#include "sfpp/eval.hpp"
#include "sfpp/tracker.hpp"

namespace sfpp {

// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

struct SequenceRun {
  TrackOutput output;
  std::vector<double> ious;  // frame 0 excluded
  EvalReport report;
};

struct BenchmarkRun {
  std::vector<SequenceRun> sequences;
  EvalReport overall;

  // Max fused score per scored frame; IoU <= failure_iou is a failure.
  SplitHistograms score_split(double failure_iou) const;
};

// Tracks every sequence from its first ground-truth box. `jobs` > 1 tracks
// sequences concurrently; results are identical either way.
BenchmarkRun run_benchmark(const ResponseModel& model, const std::vector<Sequence>& pool, const PostprocConfig& cfg,
                           int jobs = 1);

}  // namespace sfpp
