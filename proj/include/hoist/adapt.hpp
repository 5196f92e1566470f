#pragma once

#include <Eigen/Dense>

#include "hoist/ipdg.hpp"

namespace hoist {

enum class IndicatorKind { Uwr, Dwr, Fbs };

struct IndicatorField {
  Eigen::VectorXd s;  // per element, >= 0
  IndicatorKind kind = IndicatorKind::Uwr;
};

// Unweighted enriched-residual indicator: s(K) = ||R restricted to K||_2.
// The assembler supplies the test enrichment.
IndicatorField indicator_uwr(const IpdgAssembler& assembler,
                             const Eigen::VectorXd& u,
                             const Eigen::VectorXd& x);

// Dual-weighted residual indicator: fine-space (delta = 1) adjoint of the
// QoI paired elementwise with the test-enriched residual (Delta = 1, the
// enrichment for which the pairing in the adjoint space is defined).
IndicatorField indicator_dwr(const ModelVariant& model,
                             const MeshTopology& topo, const PDistribution& p,
                             double c_ip,
                             const std::vector<BoundaryCondition>& bcs,
                             const QoISpec& qoi, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& x, int nthreads = 1);

// Feature-based indicator: integral of the Frobenius norm of the physical
// state gradient over the deformed element.
IndicatorField indicator_fbs(const ModelVariant& model,
                             const MeshTopology& topo, const PDistribution& p,
                             const Eigen::VectorXd& u,
                             const Eigen::VectorXd& x);

// Threshold rule: raise the degree by one where s > tau * max(s), capped at
// p_max. All-zero indicators leave the distribution unchanged.
PDistribution p_refine(const PDistribution& p, const IndicatorField& s,
                       double tau, int p_max);

}  // namespace hoist
