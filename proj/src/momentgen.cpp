#include "bilocert/momentgen.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace bilocert {

namespace {

constexpr double kZeroTol = 1e-12;
constexpr double kPinConsistencyTol = 1e-5;

int kind_rank(OpKind k) { return k == OpKind::projector ? 0 : 1; }

}  // namespace

bool operator==(const OpSym& a, const OpSym& b) {
  return a.party == b.party && a.setting == b.setting &&
         a.outcome == b.outcome && a.kind == b.kind;
}

bool operator<(const OpSym& a, const OpSym& b) {
  return std::tie(a.party, a.setting, a.outcome) <
             std::tie(b.party, b.setting, b.outcome) ||
         (std::tie(a.party, a.setting, a.outcome) ==
              std::tie(b.party, b.setting, b.outcome) &&
          kind_rank(a.kind) < kind_rank(b.kind));
}

namespace {

bool word_less(const std::vector<OpSym>& a, const std::vector<OpSym>& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

bool word_eq(const std::vector<OpSym>& a, const std::vector<OpSym>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// Returns false when the word collapses to zero.
bool simplify_word(std::vector<OpSym>& ops) {
  std::stable_sort(ops.begin(), ops.end(),
                   [](const OpSym& a, const OpSym& b) { return a.party < b.party; });
  std::vector<OpSym> out;
  out.reserve(ops.size());
  for (const OpSym& s : ops) {
    if (!out.empty() && out.back().party == s.party) {
      const OpSym& t = out.back();
      if (s.kind == OpKind::involution) {
        if (t == s) {
          out.pop_back();
          continue;
        }
      } else {
        if (t == s) continue;  // idempotent
        if (t.setting == s.setting && t.kind == OpKind::projector) {
          return false;  // orthogonal outcomes of one measurement
        }
      }
    }
    out.push_back(s);
  }
  ops = std::move(out);
  return true;
}

std::vector<OpSym> word_adjoint(std::vector<OpSym> ops) {
  std::reverse(ops.begin(), ops.end());
  bool ok = simplify_word(ops);
  assert(ok);
  (void)ok;
  return ops;
}

// <W> with W canonical and not larger than its adjoint. Self-adjoint words
// have real expectations, so their conj flag is dropped.
ScalarSym normalize_scalar(std::vector<OpSym> ops, bool conj) {
  std::vector<OpSym> adj = word_adjoint(ops);
  if (word_eq(adj, ops)) return {std::move(ops), false};
  if (word_less(adj, ops)) return {std::move(adj), !conj};
  return {std::move(ops), conj};
}

}  // namespace

bool operator==(const ScalarSym& a, const ScalarSym& b) {
  return a.conj == b.conj && word_eq(a.ops, b.ops);
}

bool operator<(const ScalarSym& a, const ScalarSym& b) {
  if (!word_eq(a.ops, b.ops)) return word_less(a.ops, b.ops);
  return a.conj < b.conj;
}

Monomial Monomial::word(std::vector<OpSym> ops) {
  Monomial m;
  m.ops = std::move(ops);
  return canonicalize(std::move(m));
}

bool operator==(const Monomial& a, const Monomial& b) {
  return a.zero == b.zero && word_eq(a.ops, b.ops) && a.scalars == b.scalars;
}

bool operator<(const Monomial& a, const Monomial& b) {
  if (a.zero != b.zero) return b.zero;
  if (!word_eq(a.ops, b.ops)) return word_less(a.ops, b.ops);
  return std::lexicographical_compare(a.scalars.begin(), a.scalars.end(),
                                      b.scalars.begin(), b.scalars.end());
}

Monomial canonicalize(Monomial raw) {
  if (raw.zero) return {{}, {}, true};
  if (!simplify_word(raw.ops)) return {{}, {}, true};
  std::vector<ScalarSym> scalars;
  scalars.reserve(raw.scalars.size());
  for (ScalarSym& s : raw.scalars) {
    if (!simplify_word(s.ops)) return {{}, {}, true};  // <0> = 0
    if (s.ops.empty()) continue;                       // <1> = 1
    scalars.push_back(normalize_scalar(std::move(s.ops), s.conj));
  }
  std::sort(scalars.begin(), scalars.end());
  raw.scalars = std::move(scalars);
  return raw;
}

Monomial adjoint(const Monomial& m) {
  if (m.zero) return m;
  Monomial out;
  out.ops = word_adjoint(m.ops);
  out.scalars = m.scalars;
  for (ScalarSym& s : out.scalars) s.conj = !s.conj;
  std::sort(out.scalars.begin(), out.scalars.end());
  return out;
}

namespace {

std::string word_str(const std::vector<OpSym>& ops) {
  if (ops.empty()) return "1";
  std::string out;
  for (const OpSym& s : ops) {
    if (!out.empty()) out += ' ';
    out += s.party;
    out += std::to_string(s.setting);
    if (s.kind == OpKind::projector) {
      out += '_';
      out += std::to_string(s.outcome);
    }
  }
  return out;
}

std::string scalar_str(const ScalarSym& s) {
  std::string out = "<" + word_str(s.ops) + ">";
  if (s.conj) out += '*';
  return out;
}

}  // namespace

std::string to_string(const Monomial& m) {
  if (m.zero) return "0";
  std::string out = word_str(m.ops);
  for (const ScalarSym& s : m.scalars) out += " " + scalar_str(s);
  return out;
}

LevelSpec LevelSpec::parse(const std::string& text) {
  LevelSpec level;
  std::string head = text;
  std::string ext;
  if (auto pos = text.find(';'); pos != std::string::npos) {
    head = text.substr(0, pos);
    ext = text.substr(pos + 1);
  }
  size_t i = 0;
  while (i < head.size() && std::isdigit(static_cast<unsigned char>(head[i]))) ++i;
  if (i == 0) throw std::invalid_argument("level: missing base length in '" + text + "'");
  level.base_length = std::stoi(head.substr(0, i));
  if (level.base_length < 1 || level.base_length > 4) {
    throw std::invalid_argument("level: base length out of range 1..4");
  }
  while (i < head.size()) {
    char op = head[i++];
    if (op != '+' && op != '-') {
      throw std::invalid_argument("level: expected '+' or '-' in '" + text + "'");
    }
    std::string cls;
    while (i < head.size() && std::isalpha(static_cast<unsigned char>(head[i]))) {
      cls += head[i++];
    }
    if (cls.empty()) throw std::invalid_argument("level: empty class in '" + text + "'");
    std::sort(cls.begin(), cls.end());
    if (op == '+') {
      level.extra_classes.push_back(cls);
    } else {
      level.excluded_pairs.push_back(cls);
    }
  }
  if (!ext.empty()) {
    if (ext.rfind("ext=", 0) != 0) {
      throw std::invalid_argument("level: expected 'ext=' after ';' in '" + text + "'");
    }
    std::stringstream ss(ext.substr(4));
    std::string cls;
    while (std::getline(ss, cls, ',')) {
      if (cls.empty()) continue;
      if (auto star = cls.find('*'); star != std::string::npos) {
        std::string op = cls.substr(0, star);
        std::string sc = cls.substr(star + 1);
        if (op.empty() || sc.empty() || sc.find('*') != std::string::npos) {
          throw std::invalid_argument("level: bad product extension '" + cls + "'");
        }
        std::sort(op.begin(), op.end());
        std::sort(sc.begin(), sc.end());
        level.product_extensions.emplace_back(std::move(op), std::move(sc));
        continue;
      }
      std::sort(cls.begin(), cls.end());
      level.extension_classes.push_back(cls);
    }
  }
  return level;
}

std::string LevelSpec::str() const {
  std::string out = std::to_string(base_length);
  for (const std::string& c : extra_classes) out += "+" + c;
  for (const std::string& c : excluded_pairs) out += "-" + c;
  if (!extension_classes.empty() || !product_extensions.empty()) {
    out += ";ext=";
    bool first = true;
    for (const std::string& c : extension_classes) {
      if (!first) out += ',';
      first = false;
      out += c;
    }
    for (const auto& [op, sc] : product_extensions) {
      if (!first) out += ',';
      first = false;
      out += op + "*" + sc;
    }
  }
  return out;
}

namespace {

std::vector<OpSym> retained_symbols(const PartySpec& p) {
  if (p.kind == OpKind::projector && p.outcomes < 2) {
    throw std::invalid_argument("party must have at least 2 outcomes");
  }
  if (p.kind == OpKind::involution && p.outcomes != 2) {
    throw std::invalid_argument("involution parties must be dichotomic");
  }
  std::vector<OpSym> syms;
  for (int s = 0; s < p.settings; ++s) {
    int kept = p.kind == OpKind::projector ? p.outcomes - 1 : 1;
    for (int o = 0; o < kept; ++o) syms.push_back({p.party, s, o, p.kind});
  }
  return syms;
}

std::string party_set(const std::vector<OpSym>& ops) {
  std::string s;
  for (const OpSym& o : ops) {
    if (s.find(o.party) == std::string::npos) s += o.party;
  }
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

std::vector<Monomial> generate_monomials(const std::vector<PartySpec>& parties,
                                         const LevelSpec& level) {
  std::set<char> seen_party;
  std::vector<OpSym> syms;
  for (const PartySpec& p : parties) {
    if (!seen_party.insert(p.party).second) {
      throw std::invalid_argument("duplicate party label");
    }
    auto ps = retained_symbols(p);
    syms.insert(syms.end(), ps.begin(), ps.end());
  }

  std::set<Monomial> words;
  words.insert(Monomial::identity());
  std::vector<Monomial> frontier{Monomial::identity()};
  for (int len = 1; len <= level.base_length; ++len) {
    std::vector<Monomial> next;
    for (const Monomial& w : frontier) {
      for (const OpSym& s : syms) {
        Monomial ext = w;
        ext.ops.push_back(s);
        ext = canonicalize(std::move(ext));
        if (ext.zero || static_cast<int>(ext.ops.size()) != len) continue;
        if (words.insert(ext).second) next.push_back(ext);
      }
    }
    frontier = std::move(next);
  }

  std::vector<Monomial> out;
  for (const Monomial& w : words) {
    if (w.ops.size() == 2) {
      std::string cls = party_set(w.ops);
      if (cls.size() == 2 &&
          std::find(level.excluded_pairs.begin(), level.excluded_pairs.end(),
                    cls) != level.excluded_pairs.end()) {
        continue;
      }
    }
    out.push_back(w);
  }

  std::map<char, std::vector<OpSym>> by_party;
  for (const OpSym& s : syms) by_party[s.party].push_back(s);
  for (const std::string& cls : level.extra_classes) {
    std::vector<Monomial> partial{Monomial::identity()};
    for (char party : cls) {
      auto it = by_party.find(party);
      if (it == by_party.end()) {
        throw std::invalid_argument(std::string("level class references unknown party ") + party);
      }
      std::vector<Monomial> grown;
      for (const Monomial& w : partial) {
        for (const OpSym& s : it->second) {
          Monomial ext = w;
          ext.ops.push_back(s);
          grown.push_back(canonicalize(std::move(ext)));
        }
      }
      partial = std::move(grown);
    }
    for (Monomial& w : partial) {
      if (!w.zero && std::find(out.begin(), out.end(), w) == out.end()) {
        out.push_back(std::move(w));
      }
    }
  }

  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Monomial> scalar_extension_set(
    std::vector<Monomial> base, const LevelSpec& level,
    const std::function<bool(const Monomial&)>& skip) {
  std::vector<Monomial> ext;
  for (const Monomial& w : base) {
    if (w.ops.empty() || !w.scalars.empty() || w.zero) continue;
    std::string cls = party_set(w.ops);
    if (std::find(level.extension_classes.begin(), level.extension_classes.end(),
                  cls) == level.extension_classes.end()) {
      continue;
    }
    if (skip && skip(w)) continue;
    Monomial col;
    col.scalars.push_back(normalize_scalar(w.ops, false));
    col = canonicalize(std::move(col));
    if (std::find(ext.begin(), ext.end(), col) == ext.end() &&
        std::find(base.begin(), base.end(), col) == base.end()) {
      ext.push_back(std::move(col));
    }
  }
  for (const auto& [opcls, sccls] : level.product_extensions) {
    for (const Monomial& u : base) {
      if (u.ops.empty() || !u.scalars.empty() || u.zero) continue;
      if (party_set(u.ops) != opcls) continue;
      for (const Monomial& w : base) {
        if (w.ops.empty() || !w.scalars.empty() || w.zero) continue;
        if (party_set(w.ops) != sccls) continue;
        if (skip && skip(w)) continue;
        Monomial col;
        col.ops = u.ops;
        col.scalars.push_back(normalize_scalar(w.ops, false));
        col = canonicalize(std::move(col));
        if (std::find(ext.begin(), ext.end(), col) == ext.end() &&
            std::find(base.begin(), base.end(), col) == base.end()) {
          ext.push_back(std::move(col));
        }
      }
    }
  }
  base.insert(base.end(), ext.begin(), ext.end());
  return base;
}

bool observable_word(const Monomial& m) {
  if (m.zero || !m.scalars.empty()) return false;
  std::set<char> seen;
  for (const OpSym& s : m.ops) {
    if (s.kind != OpKind::projector) return false;
    if (s.party != 'A' && s.party != 'B' && s.party != 'C') return false;
    if (!seen.insert(s.party).second) return false;
  }
  return true;
}

KnownOracle behavior_oracle(const Behavior& behavior) {
  return [behavior](const Monomial& m) -> std::optional<double> {
    if (!observable_word(m)) return std::nullopt;
    int x = 0, y = 0, z = 0;
    int a = -1, b = -1, c = -1;
    for (const OpSym& s : m.ops) {
      switch (s.party) {
        case 'A': x = s.setting; a = s.outcome; break;
        case 'B': y = s.setting; b = s.outcome; break;
        case 'C': z = s.setting; c = s.outcome; break;
        default: return std::nullopt;
      }
    }
    if (x >= behavior.X || y >= behavior.Y || z >= behavior.Z) return std::nullopt;
    if (a >= behavior.A || b >= behavior.B || c >= behavior.C) return std::nullopt;
    double total = 0.0;
    for (int ai = (a < 0 ? 0 : a); ai <= (a < 0 ? behavior.A - 1 : a); ++ai) {
      for (int bi = (b < 0 ? 0 : b); bi <= (b < 0 ? behavior.B - 1 : b); ++bi) {
        for (int ci = (c < 0 ? 0 : c); ci <= (c < 0 ? behavior.C - 1 : c); ++ci) {
          total += behavior.at(x, y, z, ai, bi, ci);
        }
      }
    }
    return total;
  };
}

namespace {

// Cell expression: product of expectation factors (the operator word's own
// expectation included; empty word contributes <1>).
using RawKey = std::vector<ScalarSym>;

RawKey raw_key_of(const Monomial& cell) {
  RawKey key;
  key.push_back(normalize_scalar(cell.ops, false));  // <1> when ops empty
  for (const ScalarSym& s : cell.scalars) key.push_back(s);
  std::sort(key.begin(), key.end());
  return key;
}

RawKey conj_key(RawKey key) {
  for (ScalarSym& s : key) s.conj = !s.conj;
  std::sort(key.begin(), key.end());
  return key;
}

// Canonical representative of {key, conj(key)}; flag true when conj won.
std::pair<RawKey, bool> conj_normalize(RawKey key) {
  RawKey flipped = conj_key(key);
  if (std::lexicographical_compare(flipped.begin(), flipped.end(), key.begin(),
                                   key.end())) {
    return {std::move(flipped), true};
  }
  return {std::move(key), false};
}

struct GroupRule {
  std::string group1, group2;
  bool active() const { return !group1.empty(); }
};

GroupRule dag_groups(DagKind dag) {
  switch (dag) {
    case DagKind::none: return {"", ""};
    case DagKind::bilocal_se: return {"A", "C"};
    case DagKind::bilocal_de: return {"AE", "CF"};
  }
  return {"", ""};
}

struct Reduced {
  std::complex<double> coeff{1.0, 0.0};
  RawKey residual;       // conj-normalized
  bool conj = false;     // cell value = coeff * conj^conj(var(residual))
  bool used_factor = false;
  bool used_known = false;
  bool dropped_unit = false;
};

Reduced reduce_key(const RawKey& raw, const GroupRule& groups,
                   const KnownOracle& known) {
  Reduced red;
  RawKey pending;
  for (const ScalarSym& sym : raw) {
    if (sym.ops.empty()) {
      red.dropped_unit = true;  // <1> = 1
      continue;
    }
    Monomial word;
    word.ops = sym.ops;
    if (known) {
      if (auto v = known(word)) {
        red.coeff *= *v;  // real
        red.used_known = true;
        // Consistency with the factorized value when both are available.
        if (groups.active()) {
          std::string cls = party_set(sym.ops);
          bool spans =
              cls.find_first_of(groups.group1) != std::string::npos &&
              cls.find_first_of(groups.group2) != std::string::npos;
          bool contained = true;
          for (char p : cls) {
            if (groups.group1.find(p) == std::string::npos &&
                groups.group2.find(p) == std::string::npos) {
              contained = false;
            }
          }
          if (spans && contained) {
            std::vector<OpSym> u, w;
            for (const OpSym& o : sym.ops) {
              (groups.group1.find(o.party) != std::string::npos ? u : w)
                  .push_back(o);
            }
            auto vu = known(Monomial::word(u));
            auto vw = known(Monomial::word(w));
            if (vu && vw && std::abs(*vu * *vw - *v) > kPinConsistencyTol) {
              throw std::runtime_error(
                  "behavior violates factorization on " + word_str(sym.ops) +
                  ": " + std::to_string(*v) + " vs " + std::to_string(*vu * *vw));
            }
          }
        }
        continue;
      }
    }
    if (groups.active()) {
      std::string cls = party_set(sym.ops);
      bool in1 = cls.find_first_of(groups.group1) != std::string::npos;
      bool in2 = cls.find_first_of(groups.group2) != std::string::npos;
      bool contained = true;
      for (char p : cls) {
        if (groups.group1.find(p) == std::string::npos &&
            groups.group2.find(p) == std::string::npos) {
          contained = false;
        }
      }
      if (in1 && in2 && contained) {
        std::vector<OpSym> u, w;
        for (const OpSym& o : sym.ops) {
          (groups.group1.find(o.party) != std::string::npos ? u : w).push_back(o);
        }
        red.used_factor = true;
        for (auto& part : {u, w}) {
          bool folded = false;
          if (known) {
            if (auto v = known(Monomial::word(part))) {
              red.coeff *= *v;
              red.used_known = true;
              folded = true;
            }
          }
          if (!folded) pending.push_back(normalize_scalar(part, sym.conj));
        }
        continue;
      }
    }
    pending.push_back(sym);
  }
  std::sort(pending.begin(), pending.end());
  auto [res, flag] = conj_normalize(std::move(pending));
  red.residual = std::move(res);
  red.conj = flag;
  return red;
}

std::string key_str(const RawKey& key) {
  if (key.empty()) return "1";
  std::string out;
  for (const ScalarSym& s : key) {
    if (!out.empty()) out += ' ';
    out += scalar_str(s);
  }
  return out;
}

int tri_index(int n, int i, int j) {
  assert(i <= j);
  return i * n - i * (i - 1) / 2 + (j - i);
}

}  // namespace

const MomentProblem::Cell& MomentProblem::at(int i, int j) const {
  if (i > j) std::swap(i, j);
  return cells[tri_index(size, i, j)];
}

MomentProblem::Cell& MomentProblem::at(int i, int j) {
  if (i > j) std::swap(i, j);
  return cells[tri_index(size, i, j)];
}

MomentProblem assemble_problem(std::vector<Monomial> generators, DagKind dag,
                               const KnownOracle& known,
                               const std::vector<ObjectiveTerm>& objective) {
  for (Monomial& g : generators) g = canonicalize(std::move(g));
  {
    auto sorted = generators;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("duplicate generator");
    }
  }
  for (const Monomial& g : generators) {
    if (g.zero) throw std::invalid_argument("zero generator");
  }

  MomentProblem problem;
  problem.generators = generators;
  const int n = static_cast<int>(generators.size());
  problem.size = n;
  const GroupRule groups = dag_groups(dag);

  // Raw layer: one variable per distinct conj-normalized cell expression.
  struct RawCell {
    int raw = -1;  // -1: constant
    bool conj = false;
    double constant = 0.0;
  };
  std::vector<RawCell> raw_cells(n * (n + 1) / 2);
  std::map<RawKey, int> raw_ids;
  std::vector<RawKey> raw_keys;
  std::vector<Monomial> adjoints(n);
  for (int i = 0; i < n; ++i) adjoints[i] = adjoint(generators[i]);

  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      Monomial cell = adjoints[i];
      cell.ops.insert(cell.ops.end(), generators[j].ops.begin(),
                      generators[j].ops.end());
      cell.scalars.insert(cell.scalars.end(), generators[j].scalars.begin(),
                          generators[j].scalars.end());
      cell.zero = cell.zero || generators[j].zero;
      cell = canonicalize(std::move(cell));
      RawCell& rc = raw_cells[tri_index(n, i, j)];
      if (cell.zero) {
        rc.constant = 0.0;
        continue;
      }
      RawKey key = raw_key_of(cell);
      if (key.size() == 1 && key[0].ops.empty()) {
        rc.constant = 1.0;  // <1>
        continue;
      }
      auto [norm, flag] = conj_normalize(std::move(key));
      auto it = raw_ids.find(norm);
      if (it == raw_ids.end()) {
        it = raw_ids.emplace(norm, static_cast<int>(raw_keys.size())).first;
        raw_keys.push_back(norm);
      }
      rc.raw = it->second;
      rc.conj = flag;
    }
  }
  problem.raw_var_count = static_cast<int>(raw_keys.size());

  // Reduce every raw variable; assign reduced variables in raw order.
  struct RawReduction {
    std::complex<double> coeff{1.0, 0.0};
    int var = -1;  // -1: constant = coeff
    bool conj = false;
    bool factor = false, knownf = false, unit = false;
  };
  std::vector<RawReduction> table(raw_keys.size());
  std::map<RawKey, int> var_ids;
  std::vector<RawKey> var_keys;
  for (size_t r = 0; r < raw_keys.size(); ++r) {
    Reduced red = reduce_key(raw_keys[r], groups, known);
    RawReduction& t = table[r];
    t.coeff = red.coeff;
    t.factor = red.used_factor;
    t.knownf = red.used_known;
    t.unit = red.dropped_unit;
    if (red.residual.empty()) {
      t.var = -1;
      continue;
    }
    auto it = var_ids.find(red.residual);
    if (it == var_ids.end()) {
      it = var_ids.emplace(red.residual, static_cast<int>(var_keys.size())).first;
      var_keys.push_back(red.residual);
    }
    t.var = it->second;
    t.conj = red.conj;
  }

  // Identification links between raw variables sharing a reduced class.
  {
    std::map<int, std::vector<int>> classes;
    for (size_t r = 0; r < raw_keys.size(); ++r) {
      if (table[r].var >= 0) classes[table[r].var].push_back(static_cast<int>(r));
    }
    for (auto& [var, members] : classes) {
      (void)var;
      std::sort(members.begin(), members.end());
      for (size_t k = 1; k < members.size(); ++k) {
        int a = members[0], b = members[k];
        IdLink link;
        link.from = b;
        link.to = a;
        link.conj = table[a].conj != table[b].conj;
        if (table[a].factor || table[b].factor) {
          link.kind = "factorization";
        } else if (table[a].unit || table[b].unit) {
          link.kind = "scalar_collapse";
        } else if (table[a].knownf || table[b].knownf) {
          link.kind = "known_collapse";
        } else {
          link.kind = "conj_pair";
        }
        problem.links.push_back(std::move(link));
      }
    }
  }

  // Fill reduced cells.
  problem.cells.assign(n * (n + 1) / 2, {});
  int pinned = 0;
  for (int idx = 0; idx < static_cast<int>(raw_cells.size()); ++idx) {
    const RawCell& rc = raw_cells[idx];
    MomentProblem::Cell& cell = problem.cells[idx];
    if (rc.raw < 0) {
      cell.coeff = rc.constant;
      continue;
    }
    const RawReduction& t = table[rc.raw];
    std::complex<double> coeff = rc.conj ? std::conj(t.coeff) : t.coeff;
    // A zero coefficient pins the cell outright; keeping the variable would
    // let zero-row propagation force an unrelated moment to vanish.
    if (t.var < 0 || std::abs(coeff) <= kZeroTol) {
      cell.coeff = t.var < 0 ? coeff : 0.0;
      ++pinned;
      continue;
    }
    cell.coeff = coeff;
    cell.var = t.var;
    cell.conj = rc.conj != t.conj;
  }
  problem.pinned_cells = pinned;

  // Zero-row pruning: a pinned-zero diagonal forces its row to vanish.
  std::vector<bool> dead(n, false);
  std::vector<bool> forced(var_keys.size(), false);
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < n; ++i) {
      if (dead[i]) continue;
      const MomentProblem::Cell& d = problem.at(i, i);
      bool zero_const = d.var < 0 && std::abs(d.coeff) <= kZeroTol;
      bool zero_var = d.var >= 0 && forced[d.var];
      if (zero_const || zero_var) {
        dead[i] = true;
        changed = true;
        for (int j = 0; j < n; ++j) {
          const MomentProblem::Cell& c = problem.at(i, j);
          if (c.var >= 0) {
            if (!forced[c.var]) {
              forced[c.var] = true;
            }
          } else if (std::abs(c.coeff) > kZeroTol && i != j) {
            problem.trivially_infeasible = true;
          }
        }
      }
    }
    for (auto& cell : problem.cells) {
      if (cell.var >= 0 && forced[cell.var]) {
        cell.coeff = 0.0;
        cell.var = -1;
        cell.conj = false;
        changed = true;
      }
    }
  }

  // Compact away dead rows and unused variables.
  std::vector<int> keep_rows;
  for (int i = 0; i < n; ++i) {
    if (!dead[i]) keep_rows.push_back(i);
  }
  problem.pruned_rows = n - static_cast<int>(keep_rows.size());
  std::vector<int> var_map(var_keys.size(), -1);
  {
    const int nn = static_cast<int>(keep_rows.size());
    std::vector<MomentProblem::Cell> cells(nn * (nn + 1) / 2);
    int next_var = 0;
    for (int i = 0; i < nn; ++i) {
      for (int j = i; j < nn; ++j) {
        MomentProblem::Cell c = problem.at(keep_rows[i], keep_rows[j]);
        if (c.var >= 0) {
          if (var_map[c.var] < 0) var_map[c.var] = next_var++;
          c.var = var_map[c.var];
        }
        cells[tri_index(nn, i, j)] = c;
      }
    }
    std::vector<Monomial> gens;
    for (int i : keep_rows) gens.push_back(problem.generators[i]);
    problem.generators = std::move(gens);
    problem.size = nn;
    problem.cells = std::move(cells);
    problem.var_count = next_var;
    problem.var_self_adjoint.assign(next_var, false);
    problem.var_names.assign(next_var, "");
    for (size_t k = 0; k < var_keys.size(); ++k) {
      if (var_map[k] < 0) continue;
      problem.var_self_adjoint[var_map[k]] = conj_key(var_keys[k]) == var_keys[k];
      problem.var_names[var_map[k]] = key_str(var_keys[k]);
    }
  }

  // Objective.
  for (const ObjectiveTerm& term : objective) {
    Monomial m = canonicalize(term.monomial);
    if (m.zero || term.coeff == 0.0) continue;
    RawKey key = raw_key_of(m);
    if (key.size() == 1 && key[0].ops.empty()) {
      problem.objective_constant += term.coeff;
      continue;
    }
    auto [norm, flag] = conj_normalize(std::move(key));
    Reduced red = reduce_key(norm, groups, known);
    std::complex<double> coeff =
        term.coeff * (flag ? std::conj(red.coeff) : red.coeff);
    if (red.residual.empty()) {
      if (std::abs(coeff.imag()) > kZeroTol) {
        throw std::runtime_error("objective constant has imaginary part");
      }
      problem.objective_constant += coeff.real();
      continue;
    }
    auto it = var_ids.find(red.residual);
    int var = it == var_ids.end() ? -1 : var_map[it->second];
    if (var < 0) {
      bool was_forced = it != var_ids.end() && forced[it->second];
      if (was_forced) continue;  // variable pinned to zero
      throw std::runtime_error("level too small to express the objective: " +
                               to_string(term.monomial));
    }
    MomentProblem::ObjectiveEntry entry;
    entry.coeff = coeff;
    entry.var = var;
    entry.conj = flag != red.conj;
    problem.objective.push_back(entry);
  }

  return problem;
}

std::vector<IdLink> factorization_identities(
    const std::vector<Monomial>& generators, DagKind dag) {
  return assemble_problem(generators, dag, nullptr, {}).links;
}

LevelSpec default_level(EveModel eve) {
  if (eve == EveModel::DE) return LevelSpec::parse("2+ABE;ext=A,E,AE");
  return LevelSpec::parse("2;ext=A");
}

std::vector<ObjectiveTerm> expand_outcome_product(
    const std::vector<OutcomeFactor>& factors) {
  std::vector<std::pair<double, std::vector<OpSym>>> words = {{1.0, {}}};
  for (const auto& factor : factors) {
    std::vector<std::pair<double, std::vector<OpSym>>> parts;
    if (factor.outcome < factor.outcomes - 1) {
      parts.push_back(
          {1.0, {{factor.party, factor.setting, factor.outcome, OpKind::projector}}});
    } else {
      parts.push_back({1.0, {}});
      for (int o = 0; o < factor.outcomes - 1; ++o) {
        parts.push_back({-1.0, {{factor.party, factor.setting, o, OpKind::projector}}});
      }
    }
    std::vector<std::pair<double, std::vector<OpSym>>> grown;
    grown.reserve(words.size() * parts.size());
    for (const auto& [coeff, word] : words) {
      for (const auto& [fc, fw] : parts) {
        auto ops = word;
        ops.insert(ops.end(), fw.begin(), fw.end());
        grown.push_back({coeff * fc, std::move(ops)});
      }
    }
    words = std::move(grown);
  }
  std::vector<ObjectiveTerm> terms;
  terms.reserve(words.size());
  for (auto& [coeff, ops] : words) {
    terms.push_back({coeff, Monomial::word(std::move(ops))});
  }
  return terms;
}

namespace {

struct EveIndexer {
  int outcomes = 1;
  // Maps the target outcome tuple (a, b, c; -1 for untargeted) to this
  // eavesdropper's outcome.
  std::function<int(int, int, int)> index;
};

}  // namespace

MomentProblem build_guessing_problem(const Behavior& behavior, EveModel eve,
                                     const GuessTarget& target,
                                     const LevelSpec& level) {
  behavior.validate();
  target.validate();
  if (eve == EveModel::WE) {
    throw std::invalid_argument(
        "WE admits no moment relaxation here; use analytic bounds");
  }
  if (behavior.X != 2 || behavior.Z != 2 || behavior.A != 2 || behavior.C != 2) {
    throw std::invalid_argument("guessing problem expects binary outer parties");
  }
  if (behavior.Y < 1 || behavior.Y > 2 || (behavior.B != 2 && behavior.B != 4)) {
    throw std::invalid_argument("unsupported joining-party cardinalities");
  }

  std::vector<PartySpec> parties = {
      {'A', behavior.X, behavior.A, OpKind::projector},
      {'B', behavior.Y, behavior.B, OpKind::projector},
      {'C', behavior.Z, behavior.C, OpKind::projector},
  };

  std::vector<std::pair<char, EveIndexer>> eves;
  if (eve == EveModel::SE) {
    EveIndexer ix;
    ix.outcomes = (target.a ? behavior.A : 1) * (target.b ? behavior.B : 1) *
                  (target.c ? behavior.C : 1);
    const int nb = target.b ? behavior.B : 1;
    const int nc = target.c ? behavior.C : 1;
    ix.index = [t = target, nb, nc](int a, int b, int c) {
      int idx = 0;
      if (t.a) idx = a;
      if (t.b) idx = idx * nb + b;
      if (t.c) idx = idx * nc + c;
      return idx;
    };
    eves.push_back({'E', std::move(ix)});
  } else {
    // Two independent eavesdroppers: E sits on the (A, B) side, F on (B, C);
    // a 4-outcome joining measurement shares one bit with each.
    const bool split_bits = behavior.B == 4;
    EveIndexer e, f;
    e.outcomes = (target.a ? 2 : 1) * (target.b ? 2 : 1);
    f.outcomes = (target.b ? 2 : 1) * (target.c ? 2 : 1);
    e.index = [t = target, split_bits](int a, int b, int) {
      int idx = 0;
      if (t.a) idx = a;
      if (t.b) idx = idx * 2 + (split_bits ? (b >> 1) : b);
      return idx;
    };
    f.index = [t = target, split_bits](int, int b, int c) {
      int idx = 0;
      if (t.b) idx = split_bits ? (b & 1) : b;
      if (t.c) idx = idx * 2 + c;
      return idx;
    };
    eves.push_back({'E', std::move(e)});
    eves.push_back({'F', std::move(f)});
  }
  for (auto& [party, ix] : eves) {
    if (ix.outcomes >= 2) {
      parties.push_back({party, 1, ix.outcomes, OpKind::projector});
    }
  }

  KnownOracle oracle = behavior_oracle(behavior);
  std::vector<Monomial> generators = generate_monomials(parties, level);
  generators = scalar_extension_set(generators, level, [&](const Monomial& m) {
    return observable_word(m) && oracle(m).has_value();
  });

  std::vector<ObjectiveTerm> objective;
  const int ra = target.a ? behavior.A : 1;
  const int rb = target.b ? behavior.B : 1;
  const int rc = target.c ? behavior.C : 1;
  for (int a = 0; a < ra; ++a) {
    for (int b = 0; b < rb; ++b) {
      for (int c = 0; c < rc; ++c) {
        std::vector<OutcomeFactor> factors;
        if (target.a) factors.push_back({'A', 0, a, behavior.A});
        if (target.b) factors.push_back({'B', 0, b, behavior.B});
        if (target.c) factors.push_back({'C', 0, c, behavior.C});
        for (const auto& [party, ix] : eves) {
          if (ix.outcomes < 2) continue;
          factors.push_back({party, 0, ix.index(a, b, c), ix.outcomes});
        }
        for (auto& term : expand_outcome_product(factors)) {
          objective.push_back(std::move(term));
        }
      }
    }
  }

  DagKind dag = eve == EveModel::SE ? DagKind::bilocal_se : DagKind::bilocal_de;
  return assemble_problem(std::move(generators), dag, oracle, objective);
}

SdpInstance realify(const MomentProblem& problem) {
  if (problem.trivially_infeasible) {
    throw std::runtime_error("moment problem is trivially infeasible");
  }
  const int n = problem.size;
  bool real = true;
  for (const auto& cell : problem.cells) {
    if (std::abs(cell.coeff.imag()) > 0.0) real = false;
  }
  for (const auto& entry : problem.objective) {
    if (std::abs(entry.coeff.imag()) > 0.0) real = false;
  }

  SdpInstance instance;
  instance.objective_constant = problem.objective_constant;

  if (real) {
    // With real data the optimum is attained at a real symmetric moment
    // matrix (average any feasible point with its transpose), so each
    // variable contributes only its real part.
    instance.n = 2 * n;
    instance.duplicate_halves = true;
    instance.fi.assign(problem.var_count, {});
    instance.c.assign(problem.var_count, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        const auto& cell = problem.at(i, j);
        double v = cell.coeff.real();
        if (cell.var < 0) {
          if (v != 0.0) {
            instance.f0.push_back({i, j, v});
            instance.f0.push_back({i + n, j + n, v});
          }
        } else if (v != 0.0) {
          instance.fi[cell.var].push_back({i, j, v});
          instance.fi[cell.var].push_back({i + n, j + n, v});
        }
      }
    }
    for (const auto& entry : problem.objective) {
      instance.c[entry.var] += entry.coeff.real();
    }
    instance.validate();
    return instance;
  }

  // Complex case: variable k splits into (Re, Im); build the per-variable
  // Hermitian coefficient matrices and embed them.
  std::vector<int> re_idx(problem.var_count), im_idx(problem.var_count, -1);
  int m = 0;
  for (int k = 0; k < problem.var_count; ++k) {
    re_idx[k] = m++;
    if (!problem.var_self_adjoint[k]) im_idx[k] = m++;
  }
  instance.n = 2 * n;
  instance.fi.assign(m, {});
  instance.c.assign(m, 0.0);

  auto emit = [n](std::vector<SparseEntry>& f, int i, int j, double re, double im) {
    if (i == j) {
      if (std::abs(im) > kZeroTol) {
        throw std::runtime_error("non-real diagonal in Hermitian embedding");
      }
      if (re != 0.0) {
        f.push_back({i, i, re});
        f.push_back({i + n, i + n, re});
      }
      return;
    }
    if (re != 0.0) {
      f.push_back({i, j, re});
      f.push_back({i + n, j + n, re});
    }
    if (im != 0.0) {
      f.push_back({i, j + n, -im});
      f.push_back({j, i + n, im});
    }
  };

  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const auto& cell = problem.at(i, j);
      if (cell.var < 0) {
        emit(instance.f0, i, j, cell.coeff.real(), cell.coeff.imag());
        continue;
      }
      const double cr = cell.coeff.real();
      const double ci = cell.coeff.imag();
      emit(instance.fi[re_idx[cell.var]], i, j, cr, ci);
      if (im_idx[cell.var] >= 0) {
        // d(c*v)/d(Im v) = i*c; d(c*conj(v))/d(Im v) = -i*c.
        double s = cell.conj ? -1.0 : 1.0;
        emit(instance.fi[im_idx[cell.var]], i, j, -s * ci, s * cr);
      }
    }
  }
  for (const auto& entry : problem.objective) {
    instance.c[re_idx[entry.var]] += entry.coeff.real();
    if (im_idx[entry.var] >= 0) {
      instance.c[im_idx[entry.var]] +=
          entry.conj ? entry.coeff.imag() : -entry.coeff.imag();
    }
  }
  instance.validate();
  return instance;
}

}  // namespace bilocert
