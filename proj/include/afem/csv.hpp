#pragma once

#include <afem/adaptive.hpp>
#include <afem/counterexample.hpp>

#include <cstdio>
#include <ostream>
#include <string>

namespace afem::csv
{
    /// Round-trippable text for a double; NaN prints as "nan".
    inline std::string num(double x)
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return buf;
    }

    inline void write_trace(std::ostream & os, const std::vector<TraceRow> & trace)
    {
        os << "# afem-trace v1\n";
        os << "iter,nelems,ndofs,eta2,eta_tilde2,osc2,vol2,nmarked,gamma,err_u2,err_p2,Lambda,alpha\n";
        for (const TraceRow & r : trace)
        {
            os << r.iter << ',' << r.nelems << ',' << r.ndofs << ',' << num(r.eta2) << ',' << num(r.eta_tilde2) << ','
               << num(r.osc2) << ',' << num(r.vol2) << ',' << r.nmarked << ',' << num(r.gamma) << ',' << num(r.err_u2) << ','
               << num(r.err_p2) << ',' << num(r.Lambda) << ',' << num(r.alpha) << '\n';
        }
    }

    inline void write_monitors(std::ostream & os, const std::vector<MonitorRow> & rows)
    {
        os << "# afem-monitors v1\n";
        os << "iter,est_reduction_lhs,est_reduction_rhs,vol_reduction_lhs,vol_reduction_rhs,continuity,qo_velocity,"
              "qo_pressure,discrete_reliability,kappa_ratio,max_div_rel,galerkin_residual,marked_distance\n";
        for (const MonitorRow & m : rows)
        {
            os << m.iter << ',' << num(m.est_reduction_lhs) << ',' << num(m.est_reduction_rhs) << ','
               << num(m.vol_reduction_lhs) << ',' << num(m.vol_reduction_rhs) << ',' << num(m.continuity_constant) << ','
               << num(m.qo_velocity_constant) << ',' << num(m.qo_pressure_constant) << ','
               << num(m.discrete_reliability_constant) << ',' << num(m.kappa_ratio) << ',' << num(m.max_divergence_rel) << ','
               << num(m.galerkin_residual) << ',' << num(m.mean_marked_distance) << '\n';
        }
    }

    inline void write_estimator(std::ostream & os, const EstimatorReport & report)
    {
        os << "# afem-estimator v1\n";
        os << "element,volume,jump,eta2,osc2\n";
        for (std::size_t k = 0; k < report.elements.size(); ++k)
        {
            const ElementEstimate & e = report.elements[k];
            os << k << ',' << num(e.volume) << ',' << num(e.jump) << ',' << num(e.eta2) << ',' << num(e.osc2) << '\n';
        }
    }

    /// Velocity edge means followed by elementwise pressures, in two sections.
    inline void write_solution(std::ostream & os, const DiscreteSolution & sol)
    {
        os << "# afem-solution v1\n";
        os << "edge,u1,u2\n";
        for (std::size_t e = 0; e < sol.velocity.coeffs.size() / 2; ++e)
            os << e << ',' << num(sol.velocity.at(Index(e), 0)) << ',' << num(sol.velocity.at(Index(e), 1)) << '\n';
        os << "element,p\n";
        for (Index k = 0; k < sol.pressure.size(); ++k)
            os << k << ',' << num(sol.pressure[k]) << '\n';
    }

    inline void write_counterexample(std::ostream & os, const ScalingStudy & st)
    {
        os << "# afem-counterexample v1\n";
        os << "N,boundary_sum,grad_norm_sq,C,closed_form\n";
        for (const ScalingRow & r : st.rows)
            os << r.N << ',' << num(r.boundary_sum) << ',' << num(r.grad_norm_sq) << ',' << num(r.C) << ','
               << num(r.closed_form) << '\n';
        os << "# exponent," << num(st.exponent) << '\n';
    }
}
