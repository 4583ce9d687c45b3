#include "phylo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <string>

#include "errors.hpp"

namespace epi {

DatedTree::DatedTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) return;
  const int n = static_cast<int>(nodes_.size());
  std::vector<int> child_count(nodes_.size(), 0);
  for (int id = 0; id < n; ++id) {
    const Node& v = nodes_[id];
    if (v.parent < 0) {
      if (root_ >= 0) throw InvalidArgument("tree has more than one root");
      root_ = id;
    } else {
      if (v.parent >= n) throw InvalidArgument("parent index out of range");
      ++child_count[v.parent];
      if (v.time < nodes_[v.parent].time) {
        throw InvalidArgument("node '" + v.label + "' is older than its parent");
      }
    }
    if ((v.left < 0) != (v.right < 0)) throw InvalidArgument("internal node with one child");
    for (int ch : {v.left, v.right}) {
      if (ch >= n || (ch >= 0 && nodes_[ch].parent != id)) {
        throw InvalidArgument("inconsistent child link");
      }
    }
  }
  if (root_ < 0) throw InvalidArgument("tree has no root");
  for (int id = 0; id < n; ++id) {
    const int expected = nodes_[id].is_leaf() ? 0 : 2;
    if (child_count[id] != expected) throw InvalidArgument("tree is not binary");
  }
}

std::size_t DatedTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& v) { return v.is_leaf(); }));
}

double DatedTree::latest_time() const {
  double t = -std::numeric_limits<double>::infinity();
  for (const auto& v : nodes_) t = std::max(t, v.time);
  return t;
}

DatedTree DatedTree::shifted(double offset) const {
  DatedTree out = *this;
  for (auto& v : out.nodes_) v.time += offset;
  return out;
}

namespace {

bool is_delimiter(char ch) {
  switch (ch) {
    case '(': case ')': case ',': case ':': case ';': case '[': case ']': case '\'':
    case ' ': case '\t': case '\n': case '\r':
      return true;
    default:
      return false;
  }
}

struct RawNode {
  int parent = -1;
  std::vector<int> children;
  std::string label;
  double length = 0.0;
  bool has_length = false;
  std::size_t offset = 0;
};

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : s_(text) {}

  std::vector<RawNode> parse() {
    std::vector<int> open;
    int root = -1;
    bool expect_subtree = true;
    for (;;) {
      skip_blank();
      if (expect_subtree) {
        const int parent = open.empty() ? -1 : open.back();
        if (parent < 0 && root >= 0) throw ParseError("text after complete tree", pos_);
        const int id = add_node(parent);
        if (parent < 0) root = id;
        if (peek() == '(') {
          ++pos_;
          open.push_back(id);
          continue;
        }
        if (at_end()) throw ParseError("unexpected end of input", pos_);
        nodes_[id].label = read_label();
        read_length(id);
        expect_subtree = false;
        continue;
      }
      if (at_end()) {
        throw ParseError(open.empty() ? "missing ';'" : "unbalanced parentheses", pos_);
      }
      const char ch = s_[pos_];
      if (ch == ',') {
        if (open.empty()) throw ParseError("',' outside parentheses", pos_);
        ++pos_;
        expect_subtree = true;
      } else if (ch == ')') {
        if (open.empty()) throw ParseError("unbalanced parentheses", pos_);
        const int id = open.back();
        open.pop_back();
        ++pos_;
        skip_blank();
        nodes_[id].label = read_label();
        read_length(id);
      } else if (ch == ';') {
        if (!open.empty()) throw ParseError("unbalanced parentheses", pos_);
        ++pos_;
        break;
      } else {
        throw ParseError(std::string("unexpected character '") + ch + "'", pos_);
      }
    }
    skip_blank();
    if (!at_end()) throw ParseError("text after ';'", pos_);
    for (const auto& v : nodes_) {
      if (v.parent >= 0 && !v.has_length) throw ParseError("missing branch length", v.offset);
      if (!v.children.empty() && v.children.size() != 2) {
        throw UnsupportedTopology(
            "node with " + std::to_string(v.children.size()) + " children (binary tree required)",
            v.offset);
      }
    }
    return std::move(nodes_);
  }

 private:
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }

  void skip_blank() {
    while (!at_end()) {
      const char ch = s_[pos_];
      if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
        ++pos_;
      } else if (ch == '[') {
        const auto close = s_.find(']', pos_);
        if (close == std::string_view::npos) throw ParseError("unterminated comment", pos_);
        pos_ = close + 1;
      } else {
        break;
      }
    }
  }

  int add_node(int parent) {
    RawNode v;
    v.parent = parent;
    v.offset = pos_;
    nodes_.push_back(std::move(v));
    const int id = static_cast<int>(nodes_.size()) - 1;
    if (parent >= 0) nodes_[parent].children.push_back(id);
    return id;
  }

  std::string read_label() {
    std::string label;
    if (peek() == '\'') {
      const std::size_t start = pos_++;
      for (;;) {
        if (at_end()) throw ParseError("unterminated quoted label", start);
        const char ch = s_[pos_++];
        if (ch == '\'') {
          if (peek() == '\'') {
            label += '\'';
            ++pos_;
            continue;
          }
          break;
        }
        label += ch;
      }
    } else {
      while (!at_end() && !is_delimiter(s_[pos_])) label += s_[pos_++];
    }
    skip_blank();
    return label;
  }

  void read_length(int id) {
    if (peek() != ':') return;
    ++pos_;
    skip_blank();
    const std::size_t start = pos_;
    while (!at_end() && !is_delimiter(s_[pos_])) ++pos_;
    double value = 0.0;
    const char* first = s_.data() + start;
    const char* last = s_.data() + pos_;
    const auto res = std::from_chars(first, last, value);
    if (start == pos_ || res.ec != std::errc() || res.ptr != last) {
      throw ParseError("malformed branch length", start);
    }
    if (value < 0.0 || !std::isfinite(value)) throw ParseError("negative branch length", start);
    nodes_[id].length = value;
    nodes_[id].has_length = true;
    skip_blank();
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<RawNode> nodes_;
};

void append_label(std::string& out, const std::string& label) {
  const bool plain = std::none_of(label.begin(), label.end(), is_delimiter);
  if (plain) {
    out += label;
    return;
  }
  out += '\'';
  for (char ch : label) {
    if (ch == '\'') out += '\'';
    out += ch;
  }
  out += '\'';
}

void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

DatedTree parse_newick(std::string_view text, double most_recent_tip_time) {
  std::vector<RawNode> raw = NewickParser(text).parse();
  // Parents precede children in creation order, so one forward pass fixes depths.
  std::vector<double> depth(raw.size(), 0.0);
  double deepest_leaf = -std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < raw.size(); ++id) {
    if (raw[id].parent >= 0) depth[id] = depth[raw[id].parent] + raw[id].length;
    if (raw[id].children.empty()) deepest_leaf = std::max(deepest_leaf, depth[id]);
  }
  const double shift = most_recent_tip_time - deepest_leaf;
  std::vector<DatedTree::Node> nodes(raw.size());
  for (std::size_t id = 0; id < raw.size(); ++id) {
    auto& v = nodes[id];
    v.parent = raw[id].parent;
    v.label = std::move(raw[id].label);
    v.time = raw[id].children.empty() && depth[id] == deepest_leaf ? most_recent_tip_time
                                                                   : depth[id] + shift;
    if (raw[id].children.size() == 2) {
      v.left = raw[id].children[0];
      v.right = raw[id].children[1];
    }
  }
  return DatedTree(std::move(nodes));
}

std::string to_newick(const DatedTree& tree) {
  std::string out;
  if (tree.empty()) return ";";
  // Iterative post-order so deep caterpillar trees do not exhaust the stack.
  struct Frame {
    int id;
    int stage;
  };
  std::vector<Frame> stack{{tree.root(), 0}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& v = tree.node(f.id);
    if (!v.is_leaf() && f.stage == 0) {
      out += '(';
      f.stage = 1;
      stack.push_back({v.left, 0});
      continue;
    }
    if (!v.is_leaf() && f.stage == 1) {
      out += ',';
      f.stage = 2;
      stack.push_back({v.right, 0});
      continue;
    }
    if (!v.is_leaf()) out += ')';
    append_label(out, v.label);
    if (v.parent >= 0) {
      out += ':';
      append_number(out, v.time - tree.node(v.parent).time);
    }
    stack.pop_back();
  }
  out += ';';
  return out;
}

DatedTree apply_tip_dates(const DatedTree& tree,
                          const std::vector<std::pair<std::string, double>>& tip_dates) {
  std::map<std::string, double> dates;
  for (const auto& [label, t] : tip_dates) {
    if (!dates.emplace(label, t).second) {
      throw InvalidArgument("duplicate tip date for '" + label + "'");
    }
  }
  const double root_time = tree.node(tree.root()).time;
  double implied_root = 0.0;
  std::size_t leaves = 0;
  for (const auto& v : tree.nodes()) {
    if (!v.is_leaf()) continue;
    const auto it = dates.find(v.label);
    if (it == dates.end()) throw InvalidArgument("no tip date for leaf '" + v.label + "'");
    implied_root += it->second - (v.time - root_time);
    ++leaves;
  }
  implied_root /= static_cast<double>(leaves);
  std::vector<DatedTree::Node> nodes = tree.nodes();
  for (auto& v : nodes) {
    v.time = v.is_leaf() ? dates.at(v.label) : implied_root + (v.time - root_time);
  }
  return DatedTree(std::move(nodes));
}

std::int64_t slice_index(double t, double day_length, double present) {
  return static_cast<std::int64_t>(std::floor((present - t) / day_length + kBoundaryTolerance));
}

TreeSlices discretize(const DatedTree& tree, double day_length, double present) {
  if (!(day_length > 0.0)) throw InvalidArgument("day length must be positive");
  TreeSlices out;
  if (tree.empty()) return out;
  if (slice_index(tree.latest_time(), day_length, present) < 0) {
    throw InvalidArgument("present precedes the latest node of the tree");
  }
  const std::int64_t last = slice_index(tree.node(tree.root()).time, day_length, present);
  const auto n_slices = static_cast<std::size_t>(last + 1);
  out.a.assign(n_slices, 0);
  out.c.assign(n_slices, 0);
  // Lineage v -> parent crosses the recent boundary of slices s(v)+1 .. s(parent).
  std::vector<std::int64_t> delta(n_slices + 1, 0);
  for (const auto& v : tree.nodes()) {
    const std::int64_t s = slice_index(v.time, day_length, present);
    if (v.is_leaf()) {
      ++out.a[static_cast<std::size_t>(s)];
    } else {
      ++out.c[static_cast<std::size_t>(s)];
    }
    if (v.parent >= 0) {
      const std::int64_t sp = slice_index(tree.node(v.parent).time, day_length, present);
      if (sp > s) {
        ++delta[static_cast<std::size_t>(s + 1)];
        --delta[static_cast<std::size_t>(sp + 1)];
      }
    }
  }
  std::int64_t running = 0;
  for (std::size_t n = 0; n < n_slices; ++n) {
    running += delta[n];
    out.a[n] += running;
  }
  return out;
}

AlignedGenetics align_to_epidemic(const TreeSlices& slices, std::size_t n_days) {
  if (n_days < 1) throw InvalidArgument("epidemic must span at least one day");
  AlignedGenetics out;
  out.days.assign(n_days, DayGenetics{});
  for (std::size_t s = 0; s < slices.size(); ++s) {
    if (s < n_days) {
      out.days[n_days - 1 - s] = DayGenetics{slices.a[s], slices.c[s]};
    } else if (slices.a[s] > 0) {
      ++out.truncated_slices;
      out.truncated_coalescences += slices.c[s];
    }
  }
  return out;
}

}  // namespace epi
