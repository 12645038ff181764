#include "sfpp/benchmark.hpp"

#include <atomic>
#include <mutex>
#include <thread>

namespace sfpp {

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (int w = 0; w < std::min<int>(jobs, int(n)); ++w)
    workers.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

BenchmarkRun run_benchmark(const ResponseModel& model, const std::vector<Sequence>& pool, const PostprocConfig& cfg,
                           int jobs) {
  BenchmarkRun run;
  run.sequences.resize(pool.size());
  parallel_for(pool.size(), jobs, [&](std::size_t i) {
    SequenceRun& r = run.sequences[i];
    r.output = track_sequence(model, pool[i].frames, pool[i].gt[0], cfg);
    const auto boxes = boxes_of(r.output);
    r.ious = frame_ious(boxes, pool[i].gt);
    r.report = eval_sequence(boxes, pool[i].gt);
  });
  std::vector<EvalReport> reports;
  for (const auto& s : run.sequences) reports.push_back(s.report);
  run.overall = aggregate(reports);
  return run;
}

SplitHistograms BenchmarkRun::score_split(double failure_iou) const {
  std::vector<double> ok, bad;
  for (const auto& s : sequences)
    for (size_t t = 1; t < s.output.frames.size(); ++t)
      (s.ious[t - 1] <= failure_iou ? bad : ok).push_back(s.output.frames[t].telemetry.max_score);
  return score_histograms(ok, bad);
}

}  // namespace sfpp
