// check_report <report.json> <pointer><op><value>...
// op is one of <= >= < > ==. Values compare as numbers, booleans or strings.
#include <fstream>
#include <iostream>
#include <string>

#include <json.hpp>

using json = nlohmann::json;

namespace {

bool check(const json& doc, const std::string& expr) {
  static const char* ops[] = {"<=", ">=", "==", "<", ">"};
  for (const char* op : ops) {
    const auto pos = expr.find(op);
    if (pos == std::string::npos) continue;
    const std::string ptr = expr.substr(0, pos), rhs = expr.substr(pos + std::string(op).size());
    const json::json_pointer jp(ptr);
    if (!doc.contains(jp)) {
      std::cerr << expr << ": " << ptr << " missing\n";
      return false;
    }
    const json& v = doc.at(jp);
    bool ok = false;
    if (v.is_number()) {
      const double a = v.get<double>(), b = std::stod(rhs);
      const std::string o = op;
      ok = o == "<=" ? a <= b : o == ">=" ? a >= b : o == "==" ? a == b : o == "<" ? a < b : a > b;
    } else if (std::string(op) == "==") {
      ok = v.is_boolean() ? (v.get<bool>() == (rhs == "true")) : v.is_string() && v.get<std::string>() == rhs;
    }
    std::cout << (ok ? "ok   " : "FAIL ") << expr << " (value " << v.dump() << ")\n";
    return ok;
  }
  std::cerr << expr << ": no comparison operator\n";
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: check_report <report.json> <check>...\n";
    return 2;
  }
  std::ifstream in(argv[1]);
  if (!in) {
    std::cerr << "cannot open " << argv[1] << "\n";
    return 2;
  }
  const json doc = json::parse(in);
  bool ok = true;
  for (int i = 2; i < argc; ++i) ok = check(doc, argv[i]) && ok;
  return ok ? 0 : 1;
}
