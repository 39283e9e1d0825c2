#include "twophase/sampling.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "twophase/errors.hpp"

namespace twophase {

std::vector<long> stratify(std::vector<PhaseOneRecord>& records, const DesignSpec& spec) {
  spec.validate();
  if (records.empty()) throw DataError("stratify: no records");
  std::vector<long> Nj(static_cast<std::size_t>(spec.J), 0);
  for (auto& rec : records) {
    int j = spec.stratum_rule(rec);
    if (j < 1 || j > spec.J) throw DataError("stratify: rule emitted out-of-range stratum");
    rec.stratum = j;
    ++Nj[static_cast<std::size_t>(j - 1)];
  }
  for (int j = 0; j < spec.J; ++j) {
    if (Nj[static_cast<std::size_t>(j)] == 0)
      throw DataError("stratify: empty stratum " + std::to_string(j + 1));
  }
  return Nj;
}

Phase2Draw draw_phase2(const std::vector<PhaseOneRecord>& records, const std::vector<long>& Nj,
                       const DesignSpec& spec, RngStream rng) {
  spec.validate();
  const std::size_t n = records.size();
  Phase2Draw out;
  out.xi.assign(n, 0);
  out.nj.assign(static_cast<std::size_t>(spec.J), 0);

  // index slots per stratum, in record order
  std::vector<std::vector<std::size_t>> slots(static_cast<std::size_t>(spec.J));
  for (int j = 0; j < spec.J; ++j)
    slots[static_cast<std::size_t>(j)].reserve(static_cast<std::size_t>(Nj[static_cast<std::size_t>(j)]));
  for (std::size_t i = 0; i < n; ++i) {
    int j = records[i].stratum;
    if (j < 1 || j > spec.J) throw DataError("draw_phase2: record with out-of-range stratum");
    slots[static_cast<std::size_t>(j - 1)].push_back(i);
  }

  for (int j = 0; j < spec.J; ++j) {
    auto& idx = slots[static_cast<std::size_t>(j)];
    const double pj = spec.p[static_cast<std::size_t>(j)];
    RngStream sj = rng.child(static_cast<std::uint64_t>(j));
    if (spec.design == Design::WithoutReplacement) {
      const long target = static_cast<long>(std::floor(static_cast<double>(idx.size()) * pj));
      if (!idx.empty() && target == 0)
        throw DataError("draw_phase2: floor(N_j p_j) = 0 in stratum " + std::to_string(j + 1));
      // partial Fisher-Yates: the first `target` entries become the sample
      for (long t = 0; t < target; ++t) {
        std::size_t pick = static_cast<std::size_t>(t) +
                           static_cast<std::size_t>(sj.below(idx.size() - static_cast<std::size_t>(t)));
        std::swap(idx[static_cast<std::size_t>(t)], idx[pick]);
        out.xi[idx[static_cast<std::size_t>(t)]] = 1;
      }
      out.nj[static_cast<std::size_t>(j)] = target;
    } else {
      long cnt = 0;
      for (std::size_t i : idx) {
        if (sj.uniform01() < pj) {
          out.xi[i] = 1;
          ++cnt;
        }
      }
      out.nj[static_cast<std::size_t>(j)] = cnt;
    }
  }
  return out;
}

TwoPhaseSample make_two_phase_sample(std::vector<PhaseOneRecord> records,
                                     const std::vector<Eigen::VectorXd>& x_complete,
                                     const DesignSpec& spec, RngStream rng) {
  if (x_complete.size() != records.size())
    throw DataError("make_two_phase_sample: x/records size mismatch");
  std::vector<long> Nj(static_cast<std::size_t>(spec.J), 0);
  for (const auto& rec : records) {
    if (rec.stratum < 1 || rec.stratum > spec.J)
      throw DataError("make_two_phase_sample: records must be stratified first");
    ++Nj[static_cast<std::size_t>(rec.stratum - 1)];
  }
  Phase2Draw draw = draw_phase2(records, Nj, spec, rng);
  TwoPhaseSample s;
  s.records = std::move(records);
  s.xi = std::move(draw.xi);
  s.x.resize(s.records.size());
  for (std::size_t i = 0; i < s.records.size(); ++i)
    if (s.xi[i]) s.x[i] = x_complete[i];
  s.design = spec.design;
  s.J = spec.J;
  s.Nj = std::move(Nj);
  s.nj = std::move(draw.nj);
  s.p = spec.p;
  s.validate();
  return s;
}

double ipw_mean(const TwoPhaseSample& sample, const SampleFn& f) {
  static const Eigen::VectorXd kEmpty;
  std::vector<double> acc(static_cast<std::size_t>(sample.J), 0.0);
  for (std::size_t i = 0; i < sample.records.size(); ++i) {
    if (!sample.xi[i]) continue;
    acc[static_cast<std::size_t>(sample.records[i].stratum - 1)] +=
        f(sample.x[i], sample.records[i]);
  }
  double total = 0.0;
  for (int j = 0; j < sample.J; ++j) {
    double s = acc[static_cast<std::size_t>(j)];
    if (sample.design == Design::WithoutReplacement) {
      long njj = sample.nj[static_cast<std::size_t>(j)];
      if (njj == 0) {
        if (s != 0.0) throw DataError("ipw_mean: pi0 = 0 with selected mass");
        continue;
      }
      total += s * static_cast<double>(sample.Nj[static_cast<std::size_t>(j)]) /
               static_cast<double>(njj);
    } else {
      total += s / sample.p[static_cast<std::size_t>(j)];
    }
  }
  return total / static_cast<double>(sample.N());
}

IpwProcessResult ipw_process(const TwoPhaseSample& sample, const SampleFn& f, double P0f,
                             bool want_split, const std::vector<Eigen::VectorXd>* x_complete) {
  IpwProcessResult res;
  const double N = static_cast<double>(sample.N());
  res.total = std::sqrt(N) * (ipw_mean(sample, f) - P0f);
  if (!want_split) return res;
  if (x_complete == nullptr || x_complete->size() != sample.records.size())
    throw DataError("ipw_process: decomposition requires complete-data X");
  res.has_split = true;
  res.stratum_terms.assign(static_cast<std::size_t>(sample.J), 0.0);
  double sum_all = 0.0;
  std::vector<double> dev(static_cast<std::size_t>(sample.J), 0.0);
  for (std::size_t i = 0; i < sample.records.size(); ++i) {
    const int j = sample.records[i].stratum;
    const double fi = f((*x_complete)[i], sample.records[i]);
    sum_all += fi;
    dev[static_cast<std::size_t>(j - 1)] +=
        (static_cast<double>(sample.xi[i]) - sample.pi0_stratum(j)) * fi;
  }
  res.phase1 = std::sqrt(N) * (sum_all / N - P0f);
  for (int j = 1; j <= sample.J; ++j) {
    const double Njj = static_cast<double>(sample.Nj[static_cast<std::size_t>(j - 1)]);
    const double gj = dev[static_cast<std::size_t>(j - 1)] / std::sqrt(Njj);
    res.stratum_terms[static_cast<std::size_t>(j - 1)] =
        std::sqrt(Njj / N) / sample.pi0_stratum(j) * gj;
  }
  return res;
}

}  // namespace twophase
