#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "model.hpp"

namespace epi {

/// Binary phylogeny with every node placed on a calendar time axis. Time
/// increases toward the present, so children are younger than parents.
class DatedTree {
 public:
  struct Node {
    int parent = -1;
    int left = -1;
    int right = -1;
    double time = 0.0;
    std::string label;

    bool is_leaf() const { return left < 0; }
  };

  DatedTree() = default;
  /// Validates the invariants; throws InvalidArgument on violation.
  explicit DatedTree(std::vector<Node> nodes);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  int root() const { return root_; }
  std::size_t leaf_count() const;
  double latest_time() const;

  /// Same topology with every time shifted by `offset`.
  DatedTree shifted(double offset) const;

 private:
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Parses Newick text with branch lengths. Node times come from root-to-tip
/// accumulation, shifted so the latest leaf sits at `most_recent_tip_time`.
/// Throws ParseError (with character offset) or UnsupportedTopology for
/// multifurcations and unary nodes.
DatedTree parse_newick(std::string_view text, double most_recent_tip_time);

/// Newick with full-precision branch lengths.
std::string to_newick(const DatedTree& tree);

/// Re-dates a tree from known leaf times: leaves take their listed times, and
/// internal nodes keep their branch-length depth below a root placed at the
/// mean implied root time. Every leaf label must be listed.
DatedTree apply_tip_dates(const DatedTree& tree,
                          const std::vector<std::pair<std::string, double>>& tip_dates);

/// Per-slice counts, index 0 = the slice ending at the present.
struct TreeSlices {
  std::vector<std::int64_t> a;
  std::vector<std::int64_t> c;

  std::size_t size() const { return a.size(); }
  friend bool operator==(const TreeSlices&, const TreeSlices&) = default;
};

/// Events closer than this many slice widths to a boundary are snapped onto it.
inline constexpr double kBoundaryTolerance = 1e-9;

/// Slice n covers (present - (n+1) L, present - n L]. c[n] counts internal
/// nodes in the slice; a[n] counts lineages crossing the slice's recent
/// boundary plus leaves sampled inside it. Output ends at the root's slice.
TreeSlices discretize(const DatedTree& tree, double day_length, double present);

/// Slice index of time t under the half-open convention above.
std::int64_t slice_index(double t, double day_length, double present);

struct AlignedGenetics {
  std::vector<DayGenetics> days;         // days[n-1] is epidemic day n
  std::size_t truncated_slices = 0;      // slices older than day 1 that carried lineages
  std::int64_t truncated_coalescences = 0;
};

/// Epidemic day n receives slice n_days - n; older slices are dropped and
/// counted, days without tree coverage get (0, 0).
AlignedGenetics align_to_epidemic(const TreeSlices& slices, std::size_t n_days);

}  // namespace epi
