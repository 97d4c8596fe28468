#pragma once

#include <stdexcept>
#include <string>

namespace fedtraj {

// Stable error codes; the CLI prints them as `error[<code>]: message`.
enum class errc {
  invalid_dimension,
  unknown_node,
  unknown_edge,
  out_of_extent,
  no_candidates,
  invalid_ratio,
  invalid_ratios,
  too_few_trajectories,
  malformed_row,
  shape_mismatch,
  length_mismatch,
  index_out_of_range,
  layout_mismatch,
  non_finite_gradient,
  unrecorded_graph,
  vocabulary_overflow,
  negative_lambda,
  out_of_range_accuracy,
  empty_set,
  empty_list,
  empty_train_split,
  empty_teacher_subset,
  checkpoint_corrupt,
  version_mismatch,
  truncated_file,
  invalid_config,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::invalid_dimension: return "invalid-dimension";
    case errc::unknown_node: return "unknown-node";
    case errc::unknown_edge: return "unknown-edge";
    case errc::out_of_extent: return "out-of-extent";
    case errc::no_candidates: return "no-candidates";
    case errc::invalid_ratio: return "invalid-ratio";
    case errc::invalid_ratios: return "invalid-ratios";
    case errc::too_few_trajectories: return "too-few-trajectories";
    case errc::malformed_row: return "malformed-row";
    case errc::shape_mismatch: return "shape-mismatch";
    case errc::length_mismatch: return "length-mismatch";
    case errc::index_out_of_range: return "index-out-of-range";
    case errc::layout_mismatch: return "layout-mismatch";
    case errc::non_finite_gradient: return "non-finite-gradient";
    case errc::unrecorded_graph: return "unrecorded-graph";
    case errc::vocabulary_overflow: return "vocabulary-overflow";
    case errc::negative_lambda: return "negative-lambda";
    case errc::out_of_range_accuracy: return "out-of-range-accuracy";
    case errc::empty_set: return "empty-set";
    case errc::empty_list: return "empty-list";
    case errc::empty_train_split: return "empty-train-split";
    case errc::empty_teacher_subset: return "empty-teacher-subset";
    case errc::checkpoint_corrupt: return "checkpoint-corrupt";
    case errc::version_mismatch: return "version-mismatch";
    case errc::truncated_file: return "truncated-file";
    case errc::invalid_config: return "invalid-config";
    case errc::io_error: return "io-error";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) {
  throw error(code, what);
}

inline void require(bool ok, errc code, const std::string& what) {
  if (!ok) raise(code, what);
}

}  // namespace fedtraj
