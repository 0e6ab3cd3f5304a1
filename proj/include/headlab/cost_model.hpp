#ifndef HEADLAB_COST_MODEL_HPP_
#define HEADLAB_COST_MODEL_HPP_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace headlab {

enum class Arch { kAllAtt, kTxl };

std::string arch_name(Arch a);

// Architecture shape for closed-form parameter / MAC accounting. Vocabulary
// handling (embedding, output projection) is excluded throughout.
struct ArchSpec {
  Arch arch = Arch::kAllAtt;
  int64_t d = 512;
  int64_t heads = 8;
  int64_t layers = 16;
  int64_t seg_len = 192;   // T
  int64_t mem_len = 192;   // S
  int64_t n_persist = 2048;  // All-att only
  int64_t d_ff = 2048;       // TXL only

  int64_t head_dim() const { return d / heads; }
  int64_t total_gates() const { return layers * heads; }
  void validate() const;
};

struct CostReport {
  int64_t params = 0;
  int64_t macs = 0;  // per segment
  double param_ratio = 1.0;
  double mac_ratio = 1.0;
};

// Converts a global sparsity into a pruned-head count; throws
// GranularityError (naming the nearest representable values) unless
// sparsity*layers*heads is an integer.
int64_t pruned_heads_for_sparsity(const ArchSpec& spec, double sparsity);

// Head-partitioned weights: per head 5*d*d_h + 2*N*d_h, linear in sparsity.
int64_t allatt_params(const ArchSpec& spec, double sparsity);
int64_t allatt_params_masked(const ArchSpec& spec,
                             const std::vector<int64_t>& heads_per_layer);
// Per-segment MACs: projections + attention matmuls, all head-scaled.
int64_t allatt_macs(const ArchSpec& spec, double sparsity);

// TXL: MHA (incl. relative projection) head-scaled, FF untouched.
int64_t txl_params(const ArchSpec& spec, double sparsity);
int64_t txl_macs(const ArchSpec& spec, double sparsity);

CostReport cost_report(const ArchSpec& spec, double sparsity);

struct SweepRow {
  double sparsity;
  Arch arch;
  double param_ratio;
  double mac_ratio;
  double params;
  double macs;
};

// Evaluates both ratios on an even grid of `steps` sparsity points in [0,1]
// (continuous interpolation of the per-head-linear formulas).
std::vector<SweepRow> sparsity_sweep(const ArchSpec& spec, int steps);

// CSV: "sparsity,arch,param_ratio,mac_ratio,params,macs", deterministic order.
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace headlab

#endif  // HEADLAB_COST_MODEL_HPP_
