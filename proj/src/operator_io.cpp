#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "kdv/control_ops.hpp"
#include "kdv/errors.hpp"

namespace kdv {

namespace {

constexpr char kMagic[8] = {'K', 'D', 'V', 'O', 'P', 'v', '1', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw UsageError("operator file: truncated binary header or data");
  return v;
}

}  // namespace

void write_operator_json(std::ostream& out, const OperatorMatrix& op) {
  nlohmann::json j;
  j["format"] = "kdv-operator";
  j["version"] = 1;
  j["n_modes"] = op.n_modes();
  j["mu"] = op.mu();
  j["kind"] = to_string(op.kind());
  j["param"] = op.param();
  j["horizon"] = op.horizon();
  auto& e = j["entries"] = nlohmann::json::array();
  const auto& m = op.entries();
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) e.push_back({m(r, c).real(), m(r, c).imag()});
  }
  out << j.dump() << '\n';
}

void write_operator_binary(std::ostream& out, const OperatorMatrix& op) {
  out.write(kMagic, sizeof kMagic);
  put<std::int32_t>(out, op.n_modes());
  put<double>(out, op.mu());
  put<std::int32_t>(out, static_cast<std::int32_t>(op.kind()));
  put<double>(out, op.param());
  put<double>(out, op.horizon());
  const auto& m = op.entries();
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      put<double>(out, m(r, c).real());
      put<double>(out, m(r, c).imag());
    }
  }
}

OperatorMatrix read_operator(std::istream& in) {
  char head[sizeof kMagic];
  in.read(head, sizeof head);
  if (in && std::memcmp(head, kMagic, sizeof kMagic) == 0) {
    const int n = get<std::int32_t>(in);
    const double mu = get<double>(in);
    const int kind = get<std::int32_t>(in);
    const double param = get<double>(in);
    const double horizon = get<double>(in);
    if (n < 8 || n % 2 != 0 || kind < 0 || kind > 2) throw UsageError("operator file: bad header");
    const int dim = 2 * (n / 2 - 1);
    Eigen::MatrixXcd m(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) {
        const double re = get<double>(in);
        const double im = get<double>(in);
        m(r, c) = cplx(re, im);
      }
    }
    return OperatorMatrix(static_cast<OperatorKind>(kind), n, mu, param, horizon, std::move(m));
  }
  in.clear();
  in.seekg(0);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("operator file: ") + e.what());
  }
  if (j.value("format", "") != "kdv-operator") throw UsageError("operator file: not a kdv-operator file");
  const int n = j.at("n_modes").get<int>();
  const int dim = 2 * (n / 2 - 1);
  const auto& e = j.at("entries");
  if (static_cast<int>(e.size()) != dim * dim) throw DimensionError("operator file: entry count mismatch");
  Eigen::MatrixXcd m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) {
      const auto& v = e[static_cast<std::size_t>(r * dim + c)];
      m(r, c) = cplx(v.at(0).get<double>(), v.at(1).get<double>());
    }
  }
  return OperatorMatrix(operator_kind_from_string(j.at("kind").get<std::string>()), n, j.value("mu", 0.0),
                        j.value("param", 0.0), j.value("horizon", 0.0), std::move(m));
}

}  // namespace kdv
