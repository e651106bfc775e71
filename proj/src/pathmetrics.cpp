#include "sparsenet/pathmetrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "sparsenet/errors.hpp"
#include "sparsenet/io.hpp"
#include "sparsenet/scores.hpp"

namespace sparsenet {

BigInt count_paths(const SparseNet& net) {
  const Architecture& arch = net.arch;
  std::vector<BigInt> paths(arch.input_dim(), 1);
  for (int l = 0; l < arch.parametrized_layer_count(); ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const int area = arch.layer_kinds[l].kernel_area();
    std::vector<BigInt> next(n_out, 0);
    for (int o = 0; o < n_out; ++o) {
      for (int i = 0; i < n_in; ++i) {
        std::int64_t entries = 0;
        for (int k = 0; k < area; ++k)
          entries += net.mask[l][net.entry_index(l, o, i, k)];
        if (entries) next[o] += entries * paths[i];
      }
    }
    paths = std::move(next);
  }
  BigInt total = 0;
  for (const BigInt& p : paths) total += p;
  return total;
}

double log10_big(const BigInt& value) {
  if (value == 0) return -std::numeric_limits<double>::infinity();
  const std::string digits = value.str();
  const std::size_t head = std::min<std::size_t>(digits.size(), 15);
  return std::log10(std::stod(digits.substr(0, head))) +
         static_cast<double>(digits.size() - head);
}

std::vector<int> layer_widths(const SparseNet& net) {
  const Architecture& arch = net.arch;
  const int layers = arch.parametrized_layer_count();

  // has_in[ul][u] / has_out[ul][u] per unit layer.
  std::vector<std::vector<bool>> has_in(arch.unit_layer_count());
  std::vector<std::vector<bool>> has_out(arch.unit_layer_count());
  for (int ul = 0; ul < arch.unit_layer_count(); ++ul) {
    has_in[ul].assign(arch.layer_sizes[ul], false);
    has_out[ul].assign(arch.layer_sizes[ul], false);
  }
  for (int l = 0; l < layers; ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const int area = arch.layer_kinds[l].kernel_area();
    for (int o = 0; o < n_out; ++o)
      for (int i = 0; i < n_in; ++i)
        for (int k = 0; k < area; ++k)
          if (net.mask[l][net.entry_index(l, o, i, k)]) {
            has_out[l][i] = true;
            has_in[l + 1][o] = true;
          }
  }

  std::vector<int> widths(arch.unit_layer_count(), 0);
  for (int ul = 0; ul < arch.unit_layer_count(); ++ul) {
    for (int u = 0; u < arch.layer_sizes[ul]; ++u) {
      const bool need_in = ul > 0;
      const bool need_out = ul < arch.unit_layer_count() - 1;
      if ((!need_in || has_in[ul][u]) && (!need_out || has_out[ul][u]))
        ++widths[ul];
    }
  }
  return widths;
}

CollapseInfo detect_layer_collapse(const SparseNet& net) {
  CollapseInfo info;
  const int layers = net.arch.parametrized_layer_count();
  int empty_layers = 0;
  int first_empty = 0;
  for (int l = 0; l < layers; ++l) {
    if (net.layer_active_count(l) == 0) {
      ++empty_layers;
      if (!first_empty) first_empty = l + 1;
    }
  }
  if (empty_layers == layers) {
    info.empty_network = true;
    return info;
  }
  if (empty_layers > 0) {
    info.collapsed = true;
    info.first_collapsed_layer = first_empty;
  }
  return info;
}

double max_paths_width(int input_dim, std::int64_t m) {
  if (m <= 0) throw std::invalid_argument("max_paths_width: m must be positive");
  const double d = static_cast<double>(input_dim);
  return std::sqrt(d * d + static_cast<double>(m)) - d;
}

namespace {

BigInt binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  BigInt result = 1;
  for (std::int64_t i = 0; i < k; ++i) {
    result *= n - i;
    result /= i + 1;
  }
  return result;
}

// Flat mask over all layers, in the whole-network entry order.
using FlatMask = std::vector<std::uint8_t>;

void flat_to_layers(const SparseNet& net, const FlatMask& flat,
                    std::vector<std::vector<std::uint8_t>>& out) {
  out.resize(net.mask.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < net.mask.size(); ++l) {
    out[l].assign(flat.begin() + offset, flat.begin() + offset + net.mask[l].size());
    offset += net.mask[l].size();
  }
}

bool io_connected(const SparseNet& net, const FlatMask& flat) {
  const Architecture& arch = net.arch;
  // Every input unit needs an outgoing entry in layer 0.
  {
    const int n_in = arch.layer_sizes[0];
    const int n_out = arch.layer_sizes[1];
    const int area = arch.layer_kinds[0].kernel_area();
    for (int i = 0; i < n_in; ++i) {
      bool any = false;
      for (int o = 0; o < n_out && !any; ++o)
        for (int k = 0; k < area && !any; ++k)
          any = flat[net.entry_index(0, o, i, k)];
      if (!any) return false;
    }
  }
  // Every output unit needs an incoming entry in the last layer.
  {
    const int last = arch.parametrized_layer_count() - 1;
    const std::size_t offset = static_cast<std::size_t>(net.layer_offset(last));
    const int n_in = arch.layer_sizes[last];
    const int n_out = arch.layer_sizes[last + 1];
    const int area = arch.layer_kinds[last].kernel_area();
    for (int o = 0; o < n_out; ++o) {
      bool any = false;
      for (int i = 0; i < n_in && !any; ++i)
        for (int k = 0; k < area && !any; ++k)
          any = flat[offset + net.entry_index(last, o, i, k)];
      if (!any) return false;
    }
  }
  return true;
}

// Direct scan over all C(M, m) index combinations.
BruteForceResult scan_all_masks(const SparseNet& net, std::int64_t m,
                                MaskObjective objective) {
  const std::int64_t total = net.arch.total_param_count();
  SparseNet cand = net;

  std::vector<std::int64_t> idx(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;

  BruteForceResult best;
  bool have_best = false;
  FlatMask best_flat;
  FlatMask flat(static_cast<std::size_t>(total), 0);

  while (true) {
    std::fill(flat.begin(), flat.end(), 0);
    for (std::int64_t i : idx) flat[static_cast<std::size_t>(i)] = 1;

    const bool admissible = objective != MaskObjective::paths || io_connected(net, flat);
    if (admissible) {
      flat_to_layers(net, flat, cand.mask);
      double trace = 0.0;
      BigInt paths = 0;
      bool better;
      if (objective == MaskObjective::trace) {
        trace = path_kernel_trace(cand);
        better = !have_best || trace > best.trace_value ||
                 (trace == best.trace_value &&
                  std::lexicographical_compare(flat.begin(), flat.end(),
                                               best_flat.begin(), best_flat.end()));
      } else {
        paths = count_paths(cand);
        better = !have_best || paths > best.path_count ||
                 (paths == best.path_count &&
                  std::lexicographical_compare(flat.begin(), flat.end(),
                                               best_flat.begin(), best_flat.end()));
      }
      if (better) {
        best.trace_value = trace;
        best.path_count = paths;
        best_flat = flat;
        have_best = true;
      }
    }

    // Next index combination.
    std::int64_t pos = m - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == total - m + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (std::int64_t i = pos + 1; i < m; ++i)
      idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
  }

  if (!have_best)
    throw std::invalid_argument("brute_force_best_mask: no admissible mask with m = " +
                                std::to_string(m));
  flat_to_layers(net, best_flat, best.mask);
  return best;
}

// Exhaustive max-paths search for dense nets with exactly two hidden layers.
// P = c^T M2 a where a = first-layer row sums and c = last-layer column sums,
// so enumerating achievable (a, M2, c) covers every mask exactly.
BruteForceResult max_paths_two_hidden(const SparseNet& net, std::int64_t m) {
  const Architecture& arch = net.arch;
  const int d_in = arch.layer_sizes[0];
  const int n1 = arch.layer_sizes[1];
  const int n2 = arch.layer_sizes[2];
  const int d_out = arch.layer_sizes[3];
  const int bits0 = n1 * d_in;
  const int bits1 = n2 * n1;
  const int bits2 = d_out * n2;
  if (bits0 > 22 || bits1 > 22 || bits2 > 22)
    throw std::invalid_argument(
        "brute_force_best_mask: layer too large for the exhaustive quotient scan");

  // Patterns are packed so that flat entry i sits at bit (bits-1-i): integer
  // order then equals lexicographic mask order, so the first pattern seen for
  // a degree vector is the lexicographically lowest realization.
  auto bit_of = [](std::uint32_t pattern, int bits, int i) -> int {
    return (pattern >> (bits - 1 - i)) & 1u;
  };

  struct SideTable {
    // degree vector -> lex-lowest pattern, grouped by popcount
    std::map<std::vector<int>, std::uint32_t> by_degrees;
  };

  // rows = destination units, cols = source units; entry (r, c) is flat
  // index r * cols + c. degree_rows: per-row sums; require_cols: every column
  // nonzero (layer 0), require_rows: every row nonzero (layer 2).
  auto build_side = [&](int rows, int cols, bool degrees_are_rows,
                        bool require_full_cols, bool require_full_rows) {
    const int bits = rows * cols;
    std::vector<SideTable> tables(static_cast<std::size_t>(bits) + 1);
    for (std::uint32_t p = 0; p < (1u << bits); ++p) {
      int pop = 0;
      std::vector<int> row_sum(rows, 0), col_sum(cols, 0);
      for (int i = 0; i < bits; ++i) {
        if (!bit_of(p, bits, i)) continue;
        ++pop;
        ++row_sum[i / cols];
        ++col_sum[i % cols];
      }
      if (require_full_cols &&
          std::any_of(col_sum.begin(), col_sum.end(), [](int v) { return v == 0; }))
        continue;
      if (require_full_rows &&
          std::any_of(row_sum.begin(), row_sum.end(), [](int v) { return v == 0; }))
        continue;
      auto& slot = tables[static_cast<std::size_t>(pop)].by_degrees;
      const std::vector<int>& key = degrees_are_rows ? row_sum : col_sum;
      slot.emplace(key, p);  // keeps the first (lex-lowest) pattern
    }
    return tables;
  };

  // Layer 0 (n1 x d_in): degrees = per-hidden-unit in-degree (row sums);
  // every input column must stay connected.
  const auto first = build_side(n1, d_in, /*rows*/ true, /*full cols*/ true, false);
  // Layer 2 (d_out x n2): degrees = per-hidden-unit out-degree (column sums);
  // every output row must stay connected.
  const auto last = build_side(d_out, n2, /*rows*/ false, false, /*full rows*/ true);

  long long best_paths = -1;
  FlatMask best_flat;

  FlatMask flat(static_cast<std::size_t>(bits0 + bits1 + bits2), 0);
  auto materialize = [&](std::uint32_t p0, std::uint32_t p1, std::uint32_t p2) {
    std::fill(flat.begin(), flat.end(), 0);
    for (int i = 0; i < bits0; ++i) flat[static_cast<std::size_t>(i)] = bit_of(p0, bits0, i);
    for (int i = 0; i < bits1; ++i)
      flat[static_cast<std::size_t>(bits0 + i)] = bit_of(p1, bits1, i);
    for (int i = 0; i < bits2; ++i)
      flat[static_cast<std::size_t>(bits0 + bits1 + i)] = bit_of(p2, bits2, i);
  };

  for (int m0 = d_in; m0 <= bits0; ++m0) {
    if (first[static_cast<std::size_t>(m0)].by_degrees.empty()) continue;
    for (int m2 = d_out; m2 <= bits2; ++m2) {
      if (last[static_cast<std::size_t>(m2)].by_degrees.empty()) continue;
      const std::int64_t m1 = m - m0 - m2;
      if (m1 < 0 || m1 > bits1) continue;
      for (std::uint32_t p1 = 0; p1 < (1u << bits1); ++p1) {
        if (std::popcount(p1) != static_cast<int>(m1)) continue;
        for (const auto& [a, p0] : first[static_cast<std::size_t>(m0)].by_degrees) {
          // v[j2] = sum_j1 M2[j2][j1] * a[j1]
          std::vector<long long> v(n2, 0);
          for (int j2 = 0; j2 < n2; ++j2)
            for (int j1 = 0; j1 < n1; ++j1)
              if (bit_of(p1, bits1, j2 * n1 + j1)) v[j2] += a[j1];
          for (const auto& [c, p2] : last[static_cast<std::size_t>(m2)].by_degrees) {
            long long paths = 0;
            for (int j2 = 0; j2 < n2; ++j2) paths += v[j2] * c[j2];
            if (paths < best_paths) continue;
            materialize(p0, p1, p2);
            if (paths > best_paths ||
                std::lexicographical_compare(flat.begin(), flat.end(),
                                             best_flat.begin(), best_flat.end())) {
              best_paths = paths;
              best_flat = flat;
            }
          }
        }
      }
    }
  }

  if (best_paths < 0)
    throw std::invalid_argument("brute_force_best_mask: no admissible mask with m = " +
                                std::to_string(m));
  BruteForceResult best;
  flat_to_layers(net, best_flat, best.mask);
  best.path_count = best_paths;
  return best;
}

}  // namespace

BruteForceResult brute_force_best_mask(const SparseNet& net, std::int64_t m,
                                       MaskObjective objective) {
  if (!net.arch.all_dense())
    throw std::invalid_argument("brute_force_best_mask: dense architectures only");
  const std::int64_t total = net.arch.total_param_count();
  if (m < 1 || m > total)
    throw std::invalid_argument("brute_force_best_mask: m out of range");

  const BigInt combinations = binomial(total, m);
  if (combinations <= 1000000) return scan_all_masks(net, m, objective);
  if (objective == MaskObjective::paths && net.arch.hidden_layer_count() == 2)
    return max_paths_two_hidden(net, m);
  throw std::invalid_argument(
      "brute_force_best_mask: combinatorial guard exceeded (C(M, m) = " +
      combinations.str() + " > 10^6)");
}

StructureReport structure_report(const SparseNet& net) {
  const Architecture& arch = net.arch;
  StructureReport report;
  report.hidden_layer_count = arch.hidden_layer_count();
  report.parametrized_layer_count = arch.parametrized_layer_count();
  report.total_params = arch.total_param_count();
  report.active_params = net.active_param_count();
  report.density =
      static_cast<double>(report.active_params) / static_cast<double>(report.total_params);

  const std::vector<int> widths = layer_widths(net);
  report.input_width = arch.input_dim();
  report.input_active_width = widths[0];
  for (int l = 0; l < arch.parametrized_layer_count(); ++l) {
    StructureReport::LayerRow row;
    row.layer = l + 1;
    row.unpruned_width = arch.layer_sizes[l + 1];
    row.active_width = widths[l + 1];
    row.active_params = net.layer_active_count(l);
    row.total_params = arch.layer_param_count(l);
    row.density = static_cast<double>(row.active_params) / static_cast<double>(row.total_params);
    report.layers.push_back(row);
  }
  // Mean density over layers sharing an unpruned width (the step-function
  // view of the per-layer densities).
  for (auto& row : report.layers) {
    double sum = 0.0;
    int n = 0;
    for (const auto& other : report.layers) {
      if (other.unpruned_width == row.unpruned_width) {
        sum += other.density;
        ++n;
      }
    }
    row.width_group_density = sum / n;
  }

  report.total_paths = count_paths(net);
  report.log10_paths = log10_big(report.total_paths);
  try {
    report.trace = path_kernel_trace(net);
    report.trace_available = true;
  } catch (const OverflowError&) {
    report.trace = 0.0;
    report.trace_available = false;
  }
  report.collapse = detect_layer_collapse(net);
  return report;
}

std::string structure_csv(const StructureReport& report) {
  std::ostringstream out;
  out << "layer,unpruned_width,active_width,active_params,total_params,density,"
         "width_group_density\n";
  for (const auto& row : report.layers) {
    out << row.layer << ',' << row.unpruned_width << ',' << row.active_width << ','
        << row.active_params << ',' << row.total_params << ','
        << format_double(row.density) << ',' << format_double(row.width_group_density)
        << '\n';
  }
  return out.str();
}

nlohmann::json structure_json(const StructureReport& report) {
  nlohmann::json j;
  j["layers"] = nlohmann::json::array();
  for (const auto& row : report.layers) {
    j["layers"].push_back({{"layer", row.layer},
                           {"unpruned_width", row.unpruned_width},
                           {"active_width", row.active_width},
                           {"active_params", row.active_params},
                           {"total_params", row.total_params},
                           {"density", row.density},
                           {"width_group_density", row.width_group_density}});
  }
  j["input_width"] = report.input_width;
  j["input_active_width"] = report.input_active_width;
  j["active_params"] = report.active_params;
  j["total_params"] = report.total_params;
  j["density"] = report.density;
  j["total_paths"] = report.total_paths.str();
  j["log10_paths"] = std::isfinite(report.log10_paths)
                         ? nlohmann::json(report.log10_paths)
                         : nlohmann::json();
  j["trace"] = report.trace_available ? nlohmann::json(report.trace) : nlohmann::json();
  j["layer_collapse"] = report.collapse.collapsed;
  j["first_collapsed_layer"] = report.collapse.collapsed
                                   ? nlohmann::json(report.collapse.first_collapsed_layer)
                                   : nlohmann::json();
  j["empty_network"] = report.collapse.empty_network;
  j["hidden_layer_count"] = report.hidden_layer_count;
  j["parametrized_layer_count"] = report.parametrized_layer_count;
  return j;
}

}  // namespace sparsenet
