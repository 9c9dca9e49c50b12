#pragma once

// Text model format:
//
//   GMODEL 1
//   nodes <m> labels <n>
//   unary <node> <v0> ... <v{n-1}>     (m lines, any order, each node once)
//   edges <E>
//   edge <i> <j>                       (i < j)
//   <n*n reals, row-major, row = label at i; may span lines>
//
// Anything after '#' on a line is ignored.

#include <iosfwd>
#include <string>

#include "wam/model.hpp"

namespace wam {

GraphicalModel read_model(std::istream& in);
GraphicalModel read_model_file(const std::string& path);

/// Canonical text: unaries in node order, n values per matrix row,
/// shortest round-trip decimal formatting.
void write_model(std::ostream& out, const GraphicalModel& model);
std::string write_model(const GraphicalModel& model);
void write_model_file(const std::string& path, const GraphicalModel& model);

}  // namespace wam
