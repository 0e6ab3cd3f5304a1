#include "headlab/cost_model.hpp"

#include <cmath>
#include <iomanip>

#include "headlab/errors.hpp"

namespace headlab {

std::string arch_name(Arch a) {
  return a == Arch::kAllAtt ? "allatt" : "txl";
}

void ArchSpec::validate() const {
  if (d <= 0 || heads <= 0 || layers <= 0 || seg_len <= 0)
    throw DimensionError("arch spec: d, heads, layers, seg_len must be positive");
  if (d % heads != 0)
    throw DimensionError("arch spec: d=" + std::to_string(d) +
                         " not divisible by heads=" + std::to_string(heads));
}

namespace {

// Per-head accounting units. Everything linear in the number of open heads.
int64_t allatt_params_per_head(const ArchSpec& s) {
  return 5 * s.d * s.head_dim() + 2 * s.n_persist * s.head_dim();
}

int64_t allatt_macs_per_head(const ArchSpec& s) {
  const int64_t t = s.seg_len, ctx = s.seg_len + s.mem_len, dh = s.head_dim();
  const int64_t proj = (2 * t + 3 * ctx) * s.d * dh;  // Q, out, K, V, rel
  const int64_t attn = 2 * t * (ctx + s.n_persist) * dh;
  return proj + attn;
}

int64_t txl_params_per_head(const ArchSpec& s) {
  return 5 * s.d * s.head_dim();
}

int64_t txl_ff_params_per_layer(const ArchSpec& s) { return 2 * s.d * s.d_ff; }

int64_t txl_macs_per_head(const ArchSpec& s) {
  const int64_t t = s.seg_len, ctx = s.seg_len + s.mem_len, dh = s.head_dim();
  return (2 * t + 3 * ctx) * s.d * dh + 2 * t * ctx * dh;
}

int64_t txl_ff_macs_per_layer(const ArchSpec& s) {
  return 2 * s.seg_len * s.d * s.d_ff;
}

}  // namespace

int64_t pruned_heads_for_sparsity(const ArchSpec& spec, double sparsity) {
  const int64_t gates = spec.total_gates();
  const double exact = sparsity * gates;
  const int64_t k = std::llround(exact);
  if (std::abs(exact - k) > 1e-9 || k < 0 || k > gates) {
    const int64_t lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(exact)));
    const int64_t hi = std::min(gates, lo + 1);
    throw GranularityError(
        "sparsity " + std::to_string(sparsity) + " is not a multiple of 1/" +
        std::to_string(gates) + "; nearest representable: " +
        std::to_string(static_cast<double>(lo) / gates) + " (" +
        std::to_string(lo) + " heads) and " +
        std::to_string(static_cast<double>(hi) / gates) + " (" +
        std::to_string(hi) + " heads)");
  }
  return k;
}

int64_t allatt_params(const ArchSpec& spec, double sparsity) {
  spec.validate();
  const int64_t open = spec.total_gates() - pruned_heads_for_sparsity(spec, sparsity);
  return open * allatt_params_per_head(spec);
}

int64_t allatt_params_masked(const ArchSpec& spec,
                             const std::vector<int64_t>& heads_per_layer) {
  spec.validate();
  if (static_cast<int64_t>(heads_per_layer.size()) != spec.layers)
    throw DimensionError("allatt_params_masked: head counts for " +
                         std::to_string(heads_per_layer.size()) +
                         " layers, spec has " + std::to_string(spec.layers));
  int64_t open = 0;
  for (int64_t h : heads_per_layer) {
    if (h < 0 || h > spec.heads)
      throw DimensionError("allatt_params_masked: per-layer head count " +
                           std::to_string(h) + " out of [0," +
                           std::to_string(spec.heads) + "]");
    open += h;
  }
  return open * allatt_params_per_head(spec);
}

int64_t allatt_macs(const ArchSpec& spec, double sparsity) {
  spec.validate();
  const int64_t open = spec.total_gates() - pruned_heads_for_sparsity(spec, sparsity);
  return open * allatt_macs_per_head(spec);
}

int64_t txl_params(const ArchSpec& spec, double sparsity) {
  spec.validate();
  const int64_t open = spec.total_gates() - pruned_heads_for_sparsity(spec, sparsity);
  return open * txl_params_per_head(spec) +
         spec.layers * txl_ff_params_per_layer(spec);
}

int64_t txl_macs(const ArchSpec& spec, double sparsity) {
  spec.validate();
  const int64_t open = spec.total_gates() - pruned_heads_for_sparsity(spec, sparsity);
  return open * txl_macs_per_head(spec) +
         spec.layers * txl_ff_macs_per_layer(spec);
}

CostReport cost_report(const ArchSpec& spec, double sparsity) {
  CostReport r;
  if (spec.arch == Arch::kAllAtt) {
    r.params = allatt_params(spec, sparsity);
    r.macs = allatt_macs(spec, sparsity);
    r.param_ratio = static_cast<double>(r.params) / allatt_params(spec, 0.0);
    r.mac_ratio = static_cast<double>(r.macs) / allatt_macs(spec, 0.0);
  } else {
    r.params = txl_params(spec, sparsity);
    r.macs = txl_macs(spec, sparsity);
    r.param_ratio = static_cast<double>(r.params) / txl_params(spec, 0.0);
    r.mac_ratio = static_cast<double>(r.macs) / txl_macs(spec, 0.0);
  }
  return r;
}

std::vector<SweepRow> sparsity_sweep(const ArchSpec& spec, int steps) {
  spec.validate();
  if (steps < 2) throw UsageError("sparsity_sweep: need at least 2 grid points");
  const double gates = static_cast<double>(spec.total_gates());
  std::vector<SweepRow> rows;
  rows.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    const double s = static_cast<double>(i) / (steps - 1);
    const double open = gates * (1.0 - s);
    SweepRow row;
    row.sparsity = s;
    row.arch = spec.arch;
    if (spec.arch == Arch::kAllAtt) {
      const double dense_p = gates * allatt_params_per_head(spec);
      const double dense_m = gates * allatt_macs_per_head(spec);
      row.params = open * allatt_params_per_head(spec);
      row.macs = open * allatt_macs_per_head(spec);
      row.param_ratio = row.params / dense_p;
      row.mac_ratio = row.macs / dense_m;
    } else {
      const double ff_p = spec.layers * txl_ff_params_per_layer(spec);
      const double ff_m = spec.layers * txl_ff_macs_per_layer(spec);
      const double dense_p = gates * txl_params_per_head(spec) + ff_p;
      const double dense_m = gates * txl_macs_per_head(spec) + ff_m;
      row.params = open * txl_params_per_head(spec) + ff_p;
      row.macs = open * txl_macs_per_head(spec) + ff_m;
      row.param_ratio = row.params / dense_p;
      row.mac_ratio = row.macs / dense_m;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "sparsity,arch,param_ratio,mac_ratio,params,macs\n";
  for (const auto& r : rows) {
    os << std::setprecision(6) << r.sparsity << ',' << arch_name(r.arch) << ','
       << std::setprecision(10) << r.param_ratio << ',' << r.mac_ratio << ','
       << std::setprecision(15) << r.params << ',' << r.macs << '\n';
  }
}

}  // namespace headlab
