#pragma once

#include <afem/adaptive.hpp>
#include <afem/counterexample.hpp>
#include <afem/csv.hpp>
#include <afem/estimator.hpp>
#include <afem/geometry.hpp>
#include <afem/mesh.hpp>
#include <afem/mesh_io.hpp>
#include <afem/nesting.hpp>
#include <afem/problems.hpp>
#include <afem/quadrature.hpp>
#include <afem/spaces.hpp>
#include <afem/stokes.hpp>
#include <afem/transfer.hpp>
