#include "twophase/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "twophase/errors.hpp"

namespace twophase {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string chomp(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

double parse_double(const std::string& tok, long row, const std::string& col) {
  if (tok.empty())
    throw DataError("row " + std::to_string(row) + ": empty field in column " + col);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size())
    throw DataError("row " + std::to_string(row) + ": bad number '" + tok + "' in column " + col);
  return v;
}

long parse_long(const std::string& tok, long row, const std::string& col) {
  const double v = parse_double(tok, row, col);
  const long l = static_cast<long>(v);
  if (static_cast<double>(l) != v)
    throw DataError("row " + std::to_string(row) + ": non-integer '" + tok + "' in column " +
                    col);
  return l;
}

struct SampleHeader {
  int m = 0;       // u columns
  int p = 0;       // x columns
  bool has_stratum = false;
};

SampleHeader parse_sample_header(const std::string& line) {
  const auto cols = split_csv_line(chomp(line));
  SampleHeader h;
  size_t i = 0;
  auto expect = [&](const std::string& name) {
    if (i >= cols.size() || cols[i] != name)
      throw DataError("header: expected column '" + name + "' at position " +
                      std::to_string(i + 1));
    ++i;
  };
  expect("id");
  expect("y");
  expect("delta");
  while (i < cols.size() && cols[i] == "u_" + std::to_string(h.m + 1)) {
    ++h.m;
    ++i;
  }
  if (h.m == 0) throw DataError("header: u_1 column missing");
  if (i < cols.size() && cols[i] == "stratum") {
    h.has_stratum = true;
    ++i;
  }
  expect("xi");
  while (i < cols.size() && cols[i] == "x_" + std::to_string(h.p + 1)) {
    ++h.p;
    ++i;
  }
  if (h.p == 0) throw DataError("header: x_1 column missing");
  if (i != cols.size()) throw DataError("header: unexpected trailing column '" + cols[i] + "'");
  return h;
}

}  // namespace

std::string sample_to_csv(const TwoPhaseSample& sample) {
  const long N = sample.N();
  const int m = N > 0 ? static_cast<int>(sample.records[0].u.size()) : 1;
  int p = 0;
  for (long i = 0; i < N; ++i)
    if (sample.xi[static_cast<size_t>(i)]) {
      p = static_cast<int>(sample.x[static_cast<size_t>(i)].size());
      break;
    }
  std::ostringstream os;
  os.precision(17);
  os << "id,y,delta";
  for (int k = 1; k <= m; ++k) os << ",u_" << k;
  os << ",stratum,xi";
  for (int k = 1; k <= p; ++k) os << ",x_" << k;
  os << '\n';
  for (long i = 0; i < N; ++i) {
    const auto& rec = sample.records[static_cast<size_t>(i)];
    os << i << ',' << rec.y << ',' << rec.delta;
    for (int k = 0; k < m; ++k) os << ',' << rec.u[k];
    os << ',' << rec.stratum << ',' << int(sample.xi[static_cast<size_t>(i)]);
    if (sample.xi[static_cast<size_t>(i)]) {
      for (int k = 0; k < p; ++k) os << ',' << sample.x[static_cast<size_t>(i)][k];
    } else {
      for (int k = 0; k < p; ++k) os << ',';
    }
    os << '\n';
  }
  return os.str();
}

TwoPhaseSample sample_from_csv(std::istream& in, Design design,
                               const std::vector<double>* p_bernoulli) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: no header");
  const SampleHeader h = parse_sample_header(line);
  const size_t ncols = 3 + static_cast<size_t>(h.m) + (h.has_stratum ? 1 : 0) + 1 +
                       static_cast<size_t>(h.p);

  TwoPhaseSample s;
  s.design = design;
  long row = 0;
  while (std::getline(in, line)) {
    line = chomp(line);
    if (line.empty()) continue;
    ++row;
    const auto f = split_csv_line(line);
    if (f.size() != ncols)
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(ncols) +
                      " fields, got " + std::to_string(f.size()));
    size_t i = 0;
    parse_long(f[i++], row, "id");  // identity is positional; the column is checked, not kept
    PhaseOneRecord rec;
    rec.y = parse_double(f[i++], row, "y");
    const long d = parse_long(f[i++], row, "delta");
    if (d != 0 && d != 1) throw DataError("row " + std::to_string(row) + ": delta not in {0,1}");
    rec.delta = static_cast<int>(d);
    rec.u.resize(h.m);
    for (int k = 0; k < h.m; ++k) rec.u[k] = parse_double(f[i++], row, "u_" + std::to_string(k + 1));
    if (h.has_stratum) {
      const long st = parse_long(f[i++], row, "stratum");
      if (st < 1) throw DataError("row " + std::to_string(row) + ": stratum must be >= 1");
      rec.stratum = static_cast<int>(st);
    }
    const long xi = parse_long(f[i++], row, "xi");
    if (xi != 0 && xi != 1) throw DataError("row " + std::to_string(row) + ": xi not in {0,1}");
    Eigen::VectorXd x;
    if (xi) {
      x.resize(h.p);
      for (int k = 0; k < h.p; ++k) {
        if (f[i].empty())
          throw DataError("row " + std::to_string(row) + ": missing x_" + std::to_string(k + 1) +
                          " for selected record");
        x[k] = parse_double(f[i++], row, "x_" + std::to_string(k + 1));
      }
    } else {
      for (int k = 0; k < h.p; ++k) {
        if (!f[i].empty())
          throw DataError("row " + std::to_string(row) + ": x_" + std::to_string(k + 1) +
                          " present for unselected record");
        ++i;
      }
    }
    s.records.push_back(std::move(rec));
    s.xi.push_back(static_cast<std::uint8_t>(xi));
    s.x.push_back(std::move(x));
  }
  if (s.records.empty()) throw DataError("no data rows");
  if (!h.has_stratum) throw DataError("stratum column required (no rule supplied for recompute)");

  int J = 0;
  for (const auto& rec : s.records) J = std::max(J, rec.stratum);
  s.J = J;
  s.Nj.assign(static_cast<size_t>(J), 0);
  s.nj.assign(static_cast<size_t>(J), 0);
  for (long i = 0; i < s.N(); ++i) {
    const size_t j = static_cast<size_t>(s.records[static_cast<size_t>(i)].stratum - 1);
    ++s.Nj[j];
    if (s.xi[static_cast<size_t>(i)]) ++s.nj[j];
  }
  for (int j = 1; j <= J; ++j) {
    if (s.Nj[static_cast<size_t>(j - 1)] == 0)
      throw DataError("stratum " + std::to_string(j) + " is empty");
    if (s.nj[static_cast<size_t>(j - 1)] == 0)
      throw DataError("stratum " + std::to_string(j) + " has no selected units");
  }
  if (design == Design::Bernoulli) {
    if (!p_bernoulli) throw DataError("bernoulli design: sampling fractions p required");
    if (static_cast<int>(p_bernoulli->size()) != J)
      throw DataError("bernoulli design: p has " + std::to_string(p_bernoulli->size()) +
                      " entries, data has " + std::to_string(J) + " strata");
    for (double pj : *p_bernoulli)
      if (!(pj > 0.0 && pj <= 1.0)) throw DataError("bernoulli design: p_j outside (0,1]");
    s.p = *p_bernoulli;
  } else {
    s.p.resize(static_cast<size_t>(J));
    for (int j = 1; j <= J; ++j)
      s.p[static_cast<size_t>(j - 1)] =
          static_cast<double>(s.nj[static_cast<size_t>(j - 1)]) /
          static_cast<double>(s.Nj[static_cast<size_t>(j - 1)]);
  }
  s.validate();
  return s;
}

std::string weights_to_csv(const TwoPhaseSample& sample, const WeightSet& ws) {
  std::ostringstream os;
  os.precision(17);
  os << "id,method,w\n";
  const std::string m = to_string(ws.method);
  for (long i = 0; i < sample.N(); ++i)
    os << i << ',' << m << ',' << ws.w[i] << '\n';
  return os.str();
}

DrawSet draws_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: no header");
  const auto cols = split_csv_line(chomp(line));
  int p = 0, k = 0;
  size_t i = 0;
  while (i < cols.size() && cols[i] == "ltilde_" + std::to_string(p + 1)) {
    ++p;
    ++i;
  }
  if (p == 0) throw DataError("header: ltilde_1 column missing");
  while (i < cols.size() && cols[i] == "Z_" + std::to_string(k + 1)) {
    ++k;
    ++i;
  }
  if (k == 0) throw DataError("header: Z_1 column missing");
  if (i + 2 != cols.size() || cols[i] != "stratum" || cols[i + 1] != "pi0")
    throw DataError("header: expected trailing columns stratum, pi0");

  std::vector<std::vector<double>> lt, zz;
  std::vector<int> st;
  std::vector<double> pi;
  long row = 0;
  while (std::getline(in, line)) {
    line = chomp(line);
    if (line.empty()) continue;
    ++row;
    const auto f = split_csv_line(line);
    if (f.size() != static_cast<size_t>(p + k + 2))
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(p + k + 2) +
                      " fields, got " + std::to_string(f.size()));
    size_t c = 0;
    std::vector<double> l(static_cast<size_t>(p)), z(static_cast<size_t>(k));
    for (int a = 0; a < p; ++a) l[static_cast<size_t>(a)] = parse_double(f[c++], row, "ltilde");
    for (int a = 0; a < k; ++a) z[static_cast<size_t>(a)] = parse_double(f[c++], row, "Z");
    const long stratum = parse_long(f[c++], row, "stratum");
    if (stratum < 1) throw DataError("row " + std::to_string(row) + ": stratum must be >= 1");
    const double pi0 = parse_double(f[c++], row, "pi0");
    if (!(pi0 > 0.0 && pi0 <= 1.0))
      throw DataError("row " + std::to_string(row) + ": pi0 outside (0,1]");
    lt.push_back(std::move(l));
    zz.push_back(std::move(z));
    st.push_back(static_cast<int>(stratum));
    pi.push_back(pi0);
  }
  const long n = static_cast<long>(lt.size());
  if (n == 0) throw DataError("no data rows");

  DrawSet d;
  d.ltilde.resize(n, p);
  d.Z.resize(n, k);
  d.stratum.resize(n);
  d.pi0.resize(n);
  d.mass = Eigen::VectorXd::Ones(n);
  int J = 0;
  for (long r = 0; r < n; ++r) {
    for (int a = 0; a < p; ++a) d.ltilde(r, a) = lt[static_cast<size_t>(r)][static_cast<size_t>(a)];
    for (int a = 0; a < k; ++a) d.Z(r, a) = zz[static_cast<size_t>(r)][static_cast<size_t>(a)];
    d.stratum[r] = st[static_cast<size_t>(r)];
    d.pi0[r] = pi[static_cast<size_t>(r)];
    J = std::max(J, st[static_cast<size_t>(r)]);
  }
  d.J = J;
  d.p.assign(static_cast<size_t>(J), -1.0);
  for (long r = 0; r < n; ++r) {
    double& pj = d.p[static_cast<size_t>(d.stratum[r] - 1)];
    if (pj < 0.0) {
      pj = d.pi0[r];
    } else if (std::abs(pj - d.pi0[r]) > 1e-12 * std::max(1.0, std::abs(pj))) {
      throw DataError("pi0 varies within stratum " + std::to_string(d.stratum[r]));
    }
  }
  for (int j = 1; j <= J; ++j)
    if (d.p[static_cast<size_t>(j - 1)] < 0.0)
      throw DataError("stratum " + std::to_string(j) + " has no draws");
  d.validate();
  return d;
}

std::string draws_to_csv(const DrawSet& draws) {
  std::ostringstream os;
  os.precision(17);
  const long n = draws.n();
  const int p = static_cast<int>(draws.ltilde.cols());
  const int k = static_cast<int>(draws.Z.cols());
  for (int a = 1; a <= p; ++a) os << "ltilde_" << a << ',';
  for (int a = 1; a <= k; ++a) os << "Z_" << a << ',';
  os << "stratum,pi0\n";
  for (long r = 0; r < n; ++r) {
    for (int a = 0; a < p; ++a) os << draws.ltilde(r, a) << ',';
    for (int a = 0; a < k; ++a) os << draws.Z(r, a) << ',';
    os << draws.stratum[r] << ',' << draws.pi0[r] << '\n';
  }
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

}  // namespace twophase
