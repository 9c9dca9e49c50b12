#include "wam/model_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "wam/error.hpp"

namespace wam {
namespace {

class Tokenizer {
 public:
  explicit Tokenizer(std::istream& in) : in_(in) {}

  // Next whitespace-delimited token, or nullopt at end of input.
  std::optional<std::string> next() {
    while (pos_ >= tokens_.size()) {
      std::string line;
      if (!std::getline(in_, line)) return std::nullopt;
      ++line_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ss(line);
      tokens_.clear();
      pos_ = 0;
      for (std::string t; ss >> t;) tokens_.push_back(std::move(t));
    }
    return tokens_[pos_++];
  }

  std::string expect(const std::string& what) {
    auto t = next();
    if (!t) throw ParseError(line_, "unexpected end of input, expected " + what);
    return *t;
  }

  void keyword(const std::string& word) {
    const std::string t = expect("'" + word + "'");
    if (t != word) throw ParseError(line_, "expected '" + word + "', found '" + t + "'");
  }

  std::size_t index(const std::string& what) {
    const std::string t = expect(what);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
      throw ParseError(line_, "invalid " + what + " '" + t + "'");
    return v;
  }

  double real(const std::string& what) {
    const std::string t = expect(what);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
      throw ParseError(line_, "invalid " + what + " '" + t + "'");
    if (!std::isfinite(v)) throw ParseError(line_, "non-finite " + what + " '" + t + "'");
    return v;
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

void write_real(std::ostream& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, ptr - buf);
}

}  // namespace

GraphicalModel read_model(std::istream& in) {
  Tokenizer tok(in);
  tok.keyword("GMODEL");
  if (tok.index("format version") != 1) throw ParseError(tok.line(), "unsupported format version");
  tok.keyword("nodes");
  const std::size_t m = tok.index("node count");
  tok.keyword("labels");
  const std::size_t n = tok.index("label count");
  if (m == 0) throw ParseError(tok.line(), "node count must be positive");
  if (n < 2) throw ParseError(tok.line(), "label count must be at least 2");

  GraphicalModel model(m, n);
  std::vector<bool> seen(m, false);
  std::vector<double> values(n);
  for (std::size_t count = 0; count < m; ++count) {
    tok.keyword("unary");
    const std::size_t node = tok.index("node index");
    if (node >= m) throw ParseError(tok.line(), "unary node index " + std::to_string(node) + " out of range");
    if (seen[node]) throw ParseError(tok.line(), "duplicate unary for node " + std::to_string(node));
    seen[node] = true;
    for (auto& v : values) v = tok.real("unary value");
    model.set_unary(node, values);
  }

  tok.keyword("edges");
  const std::size_t edge_count = tok.index("edge count");
  Matrix theta(n, n);
  for (std::size_t e = 0; e < edge_count; ++e) {
    tok.keyword("edge");
    const std::size_t i = tok.index("edge endpoint");
    const std::size_t j = tok.index("edge endpoint");
    const std::string name = "edge " + std::to_string(e) + " (" + std::to_string(i) + " " + std::to_string(j) + ")";
    if (i >= j) throw ParseError(tok.line(), name + " must satisfy i < j");
    if (j >= m) throw ParseError(tok.line(), name + " references a missing node");
    for (auto& v : theta.values()) {
      auto t = tok.next();
      if (!t) throw ParseError(tok.line(), "truncated pairwise block for " + name);
      double x = 0.0;
      auto [ptr, ec] = std::from_chars(t->data(), t->data() + t->size(), x);
      if (ec != std::errc() || ptr != t->data() + t->size())
        throw ParseError(tok.line(), "invalid pairwise value '" + *t + "' in " + name);
      if (!std::isfinite(x)) throw ParseError(tok.line(), "non-finite pairwise value in " + name);
      v = x;
    }
    try {
      model.add_edge(i, j, theta);
    } catch (const InvalidInput& err) {
      throw ParseError(tok.line(), err.what());
    }
  }
  if (auto extra = tok.next()) throw ParseError(tok.line(), "trailing content '" + *extra + "'");
  return model;
}

GraphicalModel read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open model file '" + path + "'");
  return read_model(in);
}

void write_model(std::ostream& out, const GraphicalModel& model) {
  const std::size_t n = model.label_count();
  out << "GMODEL 1\n";
  out << "nodes " << model.node_count() << " labels " << n << "\n";
  for (std::size_t i = 0; i < model.node_count(); ++i) {
    out << "unary " << i;
    for (double v : model.unary(i)) {
      out << ' ';
      write_real(out, v);
    }
    out << '\n';
  }
  out << "edges " << model.edge_count() << "\n";
  for (std::size_t e = 0; e < model.edge_count(); ++e) {
    const Edge& edge = model.graph().edge(e);
    out << "edge " << edge.first << ' ' << edge.second << '\n';
    const Matrix& theta = model.pairwise(e);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        if (c) out << ' ';
        write_real(out, theta(r, c));
      }
      out << '\n';
    }
  }
}

std::string write_model(const GraphicalModel& model) {
  std::ostringstream out;
  write_model(out, model);
  return out.str();
}

void write_model_file(const std::string& path, const GraphicalModel& model) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write model file '" + path + "'");
  write_model(out, model);
}

}  // namespace wam
