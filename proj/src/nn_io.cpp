#include "battbench/nn_io.hpp"

#include <istream>
#include <ostream>

#include "battbench/text_io.hpp"

namespace battbench::nn {

namespace {

constexpr char kSchemaTag[] = "battbench-mlp";
constexpr int kSchemaVersion = 1;

template <typename Derived>
void write_values(std::ostream& out, const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out << (c ? " " : "") << text_io::format_double(m(r, c));
    }
    out << '\n';
  }
}

template <typename Derived>
void read_values(std::istream& in, Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = text_io::read_double(in, "parameter");
  }
}

}  // namespace

void save_mlp(const Mlp<double>& net, std::ostream& out) {
  out << kSchemaTag << ' ' << kSchemaVersion << '\n';
  out << "head " << (net.head() == Head::Softmax ? "softmax" : "linear") << '\n';
  out << "widths " << net.widths().size();
  for (int w : net.widths()) out << ' ' << w;
  out << '\n';
  const auto& p = net.params();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    out << "weights " << l << ' ' << p.weights[l].rows() << ' ' << p.weights[l].cols() << '\n';
    write_values(out, p.weights[l]);
    out << "bias " << l << ' ' << p.biases[l].size() << '\n';
    write_values(out, p.biases[l].transpose());
  }
  out << "end\n";
}

Mlp<double> load_mlp(std::istream& in) {
  using namespace text_io;
  expect_token(in, kSchemaTag);
  if (read_int(in, "schema version") != kSchemaVersion) {
    throw Error(ErrorKind::Parse, "unsupported network checkpoint version");
  }
  expect_token(in, "head");
  const auto head_name = next_token(in, "head");
  if (head_name != "softmax" && head_name != "linear") throw Error(ErrorKind::Parse, "unknown head " + head_name);
  expect_token(in, "widths");
  const long n = read_int(in, "width count");
  if (n < 2 || n > 64) throw Error(ErrorKind::Parse, "implausible layer count in checkpoint");
  std::vector<int> widths;
  for (long i = 0; i < n; ++i) widths.push_back(static_cast<int>(read_int(in, "width")));
  Mlp<double> net(widths, head_name == "softmax" ? Head::Softmax : Head::Linear);
  auto& p = net.mutable_params();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    expect_token(in, "weights");
    if (read_int(in, "layer") != static_cast<long>(l) || read_int(in, "rows") != p.weights[l].rows() ||
        read_int(in, "cols") != p.weights[l].cols()) {
      throw Error(ErrorKind::Parse, "weight block shape does not match widths");
    }
    read_values(in, p.weights[l]);
    expect_token(in, "bias");
    if (read_int(in, "layer") != static_cast<long>(l) || read_int(in, "size") != p.biases[l].size()) {
      throw Error(ErrorKind::Parse, "bias block shape does not match widths");
    }
    read_values(in, p.biases[l]);
  }
  expect_token(in, "end");
  if (!p.all_finite()) throw Error(ErrorKind::Numeric, "checkpoint holds non-finite parameters");
  return net;
}

}  // namespace battbench::nn
