#include "bilocert/ingest.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace bilocert {

size_t CountsTable::index(int x, int z, int a, int b, int c) {
  if (x < 0 || x > 1 || z < 0 || z > 1 || a < 0 || a > 1 || b < 0 || b > 3 ||
      c < 0 || c > 1) {
    throw std::out_of_range("CountsTable: index outside the (1,4) shape");
  }
  return static_cast<size_t>((((x * 2 + z) * 2 + a) * 4 + b) * 2 + c);
}

int64_t& CountsTable::at(int x, int z, int a, int b, int c) {
  return n[index(x, z, a, b, c)];
}

int64_t CountsTable::at(int x, int z, int a, int b, int c) const {
  return n[index(x, z, a, b, c)];
}

int64_t CountsTable::slice_total(int x, int z) const {
  int64_t total = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 2; ++c) total += at(x, z, a, b, c);
  return total;
}

void CountsTable::validate() const {
  for (int64_t v : n) {
    if (v < 0) throw std::invalid_argument("CountsTable: negative count");
  }
  for (int x = 0; x < 2; ++x) {
    for (int z = 0; z < 2; ++z) {
      if (slice_total(x, z) <= 0) {
        throw std::invalid_argument("CountsTable: empty (x=" +
                                    std::to_string(x) + ", z=" +
                                    std::to_string(z) + ") slice");
      }
    }
  }
}

namespace {

std::string trim(const std::string& s) {
  size_t lo = s.find_first_not_of(" \t\r\n");
  if (lo == std::string::npos) return "";
  size_t hi = s.find_last_not_of(" \t\r\n");
  return s.substr(lo, hi - lo + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

int64_t parse_count_field(const std::string& field, const char* what,
                          int lineno) {
  size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(field, &pos);
  } catch (...) {
    pos = std::string::npos;
  }
  if (pos != field.size() || field.empty()) {
    throw std::invalid_argument("counts CSV line " + std::to_string(lineno) +
                                ": bad " + what + " field '" + field + "'");
  }
  return v;
}

}  // namespace

CountsTable CountsTable::from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("counts CSV: empty input");
  }
  auto header = split_csv(line);
  const std::vector<std::string> expected = {"x", "z", "a", "b", "c", "count"};
  if (std::vector<std::string>(header.begin(), header.end()) != expected) {
    throw std::invalid_argument("counts CSV: header must be x,z,a,b,c,count");
  }
  CountsTable table;
  std::array<bool, 64> seen{};
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 6) {
      throw std::invalid_argument("counts CSV line " + std::to_string(lineno) +
                                  ": expected 6 fields");
    }
    const int x = static_cast<int>(parse_count_field(fields[0], "x", lineno));
    const int z = static_cast<int>(parse_count_field(fields[1], "z", lineno));
    const int a = static_cast<int>(parse_count_field(fields[2], "a", lineno));
    const int b = static_cast<int>(parse_count_field(fields[3], "b", lineno));
    const int c = static_cast<int>(parse_count_field(fields[4], "c", lineno));
    const int64_t count = parse_count_field(fields[5], "count", lineno);
    if (x < 0 || x > 1 || z < 0 || z > 1 || a < 0 || a > 1 || b < 0 || b > 3 ||
        c < 0 || c > 1 || count < 0) {
      throw std::invalid_argument("counts CSV line " + std::to_string(lineno) +
                                  ": field out of range");
    }
    size_t idx = index(x, z, a, b, c);
    if (seen[idx]) {
      throw std::invalid_argument("counts CSV line " + std::to_string(lineno) +
                                  ": duplicate cell");
    }
    seen[idx] = true;
    table.n[idx] = count;
  }
  table.validate();
  return table;
}

CountsTable CountsTable::from_csv(const std::string& text) {
  std::istringstream in(text);
  return from_csv(in);
}

CountsTable CountsTable::from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open counts file " + path);
  return from_csv(in);
}

Behavior empirical_behavior(const CountsTable& counts) {
  counts.validate();
  Behavior behavior = Behavior::zeros(2, 1, 2, 2, 4, 2);
  for (int x = 0; x < 2; ++x) {
    for (int z = 0; z < 2; ++z) {
      const double total = static_cast<double>(counts.slice_total(x, z));
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 4; ++b) {
          for (int c = 0; c < 2; ++c) {
            behavior.at(x, 0, z, a, b, c) =
                static_cast<double>(counts.at(x, z, a, b, c)) / total;
          }
        }
      }
    }
  }
  behavior.validate(true);
  return behavior;
}

std::pair<double, double> ns_residuals(const Behavior& q) {
  double ns = 0.0;
  // Marginal over a must not depend on x.
  for (int y = 0; y < q.Y; ++y) {
    for (int z = 0; z < q.Z; ++z) {
      for (int b = 0; b < q.B; ++b) {
        for (int c = 0; c < q.C; ++c) {
          double ref = 0.0;
          for (int a = 0; a < q.A; ++a) ref += q.at(0, y, z, a, b, c);
          for (int x = 1; x < q.X; ++x) {
            double m = 0.0;
            for (int a = 0; a < q.A; ++a) m += q.at(x, y, z, a, b, c);
            ns = std::max(ns, std::abs(m - ref));
          }
        }
      }
    }
  }
  // Marginal over b must not depend on y.
  for (int x = 0; x < q.X; ++x) {
    for (int z = 0; z < q.Z; ++z) {
      for (int a = 0; a < q.A; ++a) {
        for (int c = 0; c < q.C; ++c) {
          double ref = 0.0;
          for (int b = 0; b < q.B; ++b) ref += q.at(x, 0, z, a, b, c);
          for (int y = 1; y < q.Y; ++y) {
            double m = 0.0;
            for (int b = 0; b < q.B; ++b) m += q.at(x, y, z, a, b, c);
            ns = std::max(ns, std::abs(m - ref));
          }
        }
      }
    }
  }
  // Marginal over c must not depend on z.
  for (int x = 0; x < q.X; ++x) {
    for (int y = 0; y < q.Y; ++y) {
      for (int a = 0; a < q.A; ++a) {
        for (int b = 0; b < q.B; ++b) {
          double ref = 0.0;
          for (int c = 0; c < q.C; ++c) ref += q.at(x, y, 0, a, b, c);
          for (int z = 1; z < q.Z; ++z) {
            double m = 0.0;
            for (int c = 0; c < q.C; ++c) m += q.at(x, y, z, a, b, c);
            ns = std::max(ns, std::abs(m - ref));
          }
        }
      }
    }
  }

  // Independence of the outer marginals, averaged over the other settings to
  // stay well defined on signaling inputs.
  const double ny = q.Y, nz = q.Z, nx = q.X;
  std::vector<double> pa(q.A * q.X, 0.0), pc(q.C * q.Z, 0.0);
  for (int x = 0; x < q.X; ++x) {
    for (int a = 0; a < q.A; ++a) {
      double s = 0.0;
      for (int y = 0; y < q.Y; ++y)
        for (int z = 0; z < q.Z; ++z)
          for (int b = 0; b < q.B; ++b)
            for (int c = 0; c < q.C; ++c) s += q.at(x, y, z, a, b, c);
      pa[a * q.X + x] = s / (ny * nz);
    }
  }
  for (int z = 0; z < q.Z; ++z) {
    for (int c = 0; c < q.C; ++c) {
      double s = 0.0;
      for (int x = 0; x < q.X; ++x)
        for (int y = 0; y < q.Y; ++y)
          for (int a = 0; a < q.A; ++a)
            for (int b = 0; b < q.B; ++b) s += q.at(x, y, z, a, b, c);
      pc[c * q.Z + z] = s / (nx * ny);
    }
  }
  double indep = 0.0;
  for (int x = 0; x < q.X; ++x) {
    for (int z = 0; z < q.Z; ++z) {
      for (int a = 0; a < q.A; ++a) {
        for (int c = 0; c < q.C; ++c) {
          double pac = 0.0;
          for (int y = 0; y < q.Y; ++y)
            for (int b = 0; b < q.B; ++b) pac += q.at(x, y, z, a, b, c);
          pac /= ny;
          indep = std::max(
              std::abs(pac - pa[a * q.X + x] * pc[c * q.Z + z]), indep);
        }
      }
    }
  }
  return {ns, indep};
}

namespace {

constexpr double kLogFloor = 1e-12;

size_t flat(int x, int z, int a, int b, int c) {
  return CountsTable::index(x, z, a, b, c);
}

// Affine rows: four slice normalizations plus both no-signaling families.
void build_affine(Eigen::MatrixXd& A, Eigen::VectorXd& rhs) {
  A = Eigen::MatrixXd::Zero(36, 64);
  rhs = Eigen::VectorXd::Zero(36);
  int row = 0;
  for (int x = 0; x < 2; ++x) {
    for (int z = 0; z < 2; ++z) {
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 4; ++b)
          for (int c = 0; c < 2; ++c) A(row, flat(x, z, a, b, c)) = 1.0;
      rhs(row) = 1.0;
      ++row;
    }
  }
  for (int z = 0; z < 2; ++z) {
    for (int b = 0; b < 4; ++b) {
      for (int c = 0; c < 2; ++c) {
        for (int a = 0; a < 2; ++a) {
          A(row, flat(0, z, a, b, c)) = 1.0;
          A(row, flat(1, z, a, b, c)) = -1.0;
        }
        ++row;
      }
    }
  }
  for (int x = 0; x < 2; ++x) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 4; ++b) {
        for (int c = 0; c < 2; ++c) {
          A(row, flat(x, 0, a, b, c)) += 1.0;
          A(row, flat(x, 1, a, b, c)) -= 1.0;
        }
        ++row;
      }
    }
  }
  assert(row == 36);
}

struct Marginals {
  double pac[2][2][2][2];  // [a][c][x][z]
  double pa[2][2];         // [a][x]
  double pc[2][2];         // [c][z]
  double d[2][2][2][2];
  double phi = 0.0;
};

double max_deviation(const Marginals& m) {
  double dmax = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int c = 0; c < 2; ++c)
      for (int x = 0; x < 2; ++x)
        for (int z = 0; z < 2; ++z)
          dmax = std::max(dmax, std::abs(m.d[a][c][x][z]));
  return dmax;
}

Marginals marginals_of(const Eigen::VectorXd& p) {
  Marginals m{};
  for (int a = 0; a < 2; ++a)
    for (int c = 0; c < 2; ++c)
      for (int x = 0; x < 2; ++x)
        for (int z = 0; z < 2; ++z) {
          double s = 0.0;
          for (int b = 0; b < 4; ++b) s += p(flat(x, z, a, b, c));
          m.pac[a][c][x][z] = s;
        }
  for (int a = 0; a < 2; ++a)
    for (int x = 0; x < 2; ++x) {
      double s = 0.0;
      for (int c = 0; c < 2; ++c)
        for (int z = 0; z < 2; ++z) s += m.pac[a][c][x][z];
      m.pa[a][x] = s / 2.0;
    }
  for (int c = 0; c < 2; ++c)
    for (int z = 0; z < 2; ++z) {
      double s = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int x = 0; x < 2; ++x) s += m.pac[a][c][x][z];
      m.pc[c][z] = s / 2.0;
    }
  for (int a = 0; a < 2; ++a)
    for (int c = 0; c < 2; ++c)
      for (int x = 0; x < 2; ++x)
        for (int z = 0; z < 2; ++z) {
          m.d[a][c][x][z] = m.pac[a][c][x][z] - m.pa[a][x] * m.pc[c][z];
          m.phi += m.d[a][c][x][z] * m.d[a][c][x][z];
        }
  return m;
}

struct StartResult {
  Eigen::VectorXd p;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  int64_t iterations = 0;
  double independence = 0.0;
};

}  // namespace

std::string ProjectionResult::to_json() const {
  nlohmann::json j;
  j["behavior"] = nlohmann::json::parse(behavior_to_json(behavior));
  j["log_likelihood"] = log_likelihood;
  j["ns_residual"] = ns_residual;
  j["independence_residual"] = independence_residual;
  j["iterations"] = iterations;
  j["converged"] = converged;
  j["seed"] = seed;
  return j.dump(2);
}

ProjectionResult project_ns(const CountsTable& counts, double tol,
                            uint32_t seed) {
  counts.validate();
  const Behavior emp = empirical_behavior(counts);
  Eigen::VectorXd n(64);
  for (int i = 0; i < 64; ++i) n(i) = static_cast<double>(counts.n[i]);

  Eigen::MatrixXd A;
  Eigen::VectorXd rhs;
  build_affine(A, rhs);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);

  auto affine = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return p - cod.solve(A * p - rhs);
  };
  auto tangent = [&](const Eigen::VectorXd& g) -> Eigen::VectorXd {
    return g - cod.solve(A * g);
  };
  auto restore = [&](Eigen::VectorXd p) -> Eigen::VectorXd {
    for (int round = 0; round < 60; ++round) {
      p = affine(p);
      if (p.minCoeff() >= -1e-12) break;
      p = p.cwiseMax(0.0);
    }
    return p.cwiseMax(0.0);
  };
  auto log_lik = [&](const Eigen::VectorXd& p) {
    double s = 0.0;
    for (int i = 0; i < 64; ++i) {
      if (n(i) > 0) s += n(i) * std::log(std::max(p(i), kLogFloor));
    }
    return s;
  };
  auto objective = [&](const Eigen::VectorXd& p, double mu) {
    return log_lik(p) - mu * marginals_of(p).phi;
  };
  auto gradient = [&](const Eigen::VectorXd& p, double mu) {
    Eigen::VectorXd g(64);
    Marginals m = marginals_of(p);
    for (int x = 0; x < 2; ++x)
      for (int z = 0; z < 2; ++z)
        for (int a = 0; a < 2; ++a)
          for (int c = 0; c < 2; ++c) {
            double pen = m.d[a][c][x][z];
            for (int c2 = 0; c2 < 2; ++c2)
              for (int z2 = 0; z2 < 2; ++z2)
                pen -= 0.5 * m.d[a][c2][x][z2] * m.pc[c2][z2];
            for (int a2 = 0; a2 < 2; ++a2)
              for (int x2 = 0; x2 < 2; ++x2)
                pen -= 0.5 * m.d[a2][c][x2][z] * m.pa[a2][x2];
            for (int b = 0; b < 4; ++b) {
              size_t i = flat(x, z, a, b, c);
              g(i) = n(i) / std::max(p(i), kLogFloor) - 2.0 * mu * pen;
            }
          }
    return g;
  };

  auto run_start = [&](int start) {
    std::mt19937 rng(seed + static_cast<uint32_t>(start));
    Eigen::VectorXd p(64);
    for (int i = 0; i < 64; ++i) p(i) = emp.p[i];
    if (start > 0) {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int i = 0; i < 64; ++i) p(i) *= 1.0 + 0.05 * u(rng);
    }
    p = restore(p);

    StartResult result;
    double mu = 1.0;
    double f = objective(p, mu);
    for (int phase = 0; phase < 9; ++phase) {
      double step = 0.25;
      for (int it = 0; it < 2000; ++it) {
        Eigen::VectorXd dir = tangent(gradient(p, mu));
        if (dir.norm() < 1e-14) break;
        double t = step;
        bool accepted = false;
        double rel = 0.0;
        for (int h = 0; h < 40; ++h) {
          Eigen::VectorXd q = restore(p + t * dir);
          double fq = objective(q, mu);
          if (fq > f) {
            assert(fq >= f);
            rel = (fq - f) / (1.0 + std::abs(f));
            p = std::move(q);
            f = fq;
            ++result.iterations;
            step = std::min(t * 2.0, 4.0);
            accepted = true;
            break;
          }
          t *= 0.5;
        }
        if (!accepted || rel < tol) break;
      }
      result.independence = max_deviation(marginals_of(p));
      if (result.independence < 1e-7) break;
      mu *= 10.0;
      f = objective(p, mu);
    }
    // Exact per-slice renormalization absorbs the clipping drift.
    for (int x = 0; x < 2; ++x) {
      for (int z = 0; z < 2; ++z) {
        double total = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 2; ++c) total += p(flat(x, z, a, b, c));
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 2; ++c) p(flat(x, z, a, b, c)) /= total;
      }
    }
    result.p = p;
    result.log_likelihood = 0.0;
    for (int i = 0; i < 64; ++i) {
      if (n(i) > 0) result.log_likelihood += n(i) * std::log(std::max(p(i), 1e-300));
    }
    return result;
  };

  std::vector<std::future<StartResult>> futures;
  futures.reserve(8);
  for (int s = 0; s < 8; ++s) {
    futures.push_back(std::async(std::launch::async, run_start, s));
  }
  std::vector<StartResult> starts;
  starts.reserve(8);
  for (auto& f : futures) starts.push_back(f.get());

  int best = 0;
  for (int s = 1; s < 8; ++s) {
    if (starts[s].log_likelihood > starts[best].log_likelihood) best = s;
  }

  ProjectionResult out;
  out.behavior = Behavior::zeros(2, 1, 2, 2, 4, 2);
  for (int i = 0; i < 64; ++i) out.behavior.p[i] = starts[best].p(i);
  out.behavior.validate(true);
  out.log_likelihood = starts[best].log_likelihood;
  auto [ns, indep] = ns_residuals(out.behavior);
  out.ns_residual = ns;
  out.independence_residual = indep;
  out.iterations = starts[best].iterations;
  out.converged = ns < 1e-8 && indep < 1e-7;
  out.seed = seed;
  return out;
}

}  // namespace bilocert
