#pragma once

// Data-parallel kernels behind operator assembly and control sampling.
// Each kernel has an OpenMP version and a serial reference in
// kdv::kernels::serial that the tests compare against.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "kdv/control_ops.hpp"

namespace kdv::kernels {

/// Columns of GG* on the mean-zero basis, one matrix-free application per mode.
Eigen::MatrixXcd assemble_ggstar(const ControlProfile& p);

/// base(k,l) * int_0^H exp((-2 decay + i sign (omega_k - omega_l)) s) ds.
Eigen::MatrixXcd time_weighted(const Eigen::MatrixXcd& base, const LinearSymbol& sym, double decay,
                               double horizon, int sign);

/// h(t) = G W(t - T) phi at each requested time.
std::vector<Field> sample_adjoint_control(const Field& phi, std::span<const double> times, double T,
                                          const ControlProfile& p, const LinearSymbol& sym);

namespace serial {
Eigen::MatrixXcd assemble_ggstar(const ControlProfile& p);
Eigen::MatrixXcd time_weighted(const Eigen::MatrixXcd& base, const LinearSymbol& sym, double decay,
                               double horizon, int sign);
std::vector<Field> sample_adjoint_control(const Field& phi, std::span<const double> times, double T,
                                          const ControlProfile& p, const LinearSymbol& sym);
}  // namespace serial

}  // namespace kdv::kernels
