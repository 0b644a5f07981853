#include "bflm/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "bflm/errors.hpp"

namespace bflm {

namespace {
constexpr double kLn2 = 0.6931471805599453;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}
}  // namespace

double PositionBucket::ppl() const {
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::exp2(sum_neg_log2 / double(count));
}

double perplexity(std::span<const double> log2_probs) {
  if (log2_probs.empty()) throw ContractViolation("perplexity: empty input");
  double sum = 0.0;
  for (double v : log2_probs) {
    if (v == -std::numeric_limits<double>::infinity())
      return std::numeric_limits<double>::infinity();
    sum += v;
  }
  return std::exp2(-sum / double(log2_probs.size()));
}

EvalReport evaluate(const Model& model, std::span<const Sentence> corpus, bool oracle,
                    const SplitPolicy& policy, DetRng* rng) {
  EvalReport rep;
  rep.oracle_mode = oracle;

  double sum_plain = 0.0;   // -log2 p over real words, split factor as scored
  double sum_oracle = 0.0;  // same with the split factor forced to p = 1
  double sum_first = 0.0;
  double sum_subseq = 0.0;
  std::map<int, PositionBucket> curve;

  for (const Sentence& sent : corpus) {
    for (int id : sent.ids)
      if (id < 0 || static_cast<std::size_t>(id) >= model.config().vocab)
        throw DataError("evaluate: corpus token id outside the model vocabulary");
    SplitSentence split = assign_split(sent, policy, rng);
    ForwardTrace trace = model.forward(split);
    ++rep.sentences;

    for (const TraceEmission& e : trace.terms) {
      const TermInfo& info = e.info;
      if (info.kind != TermInfo::Kind::Word) continue;  // <eos> and pads never count
      const double nll2 = -info.logp / kLn2;
      sum_plain += nll2;
      sum_oracle += info.is_split ? 0.0 : nll2;
      const double bucketed = (oracle && info.is_split) ? 0.0 : nll2;

      ++rep.tokens_total;
      if (info.position == 1) {
        sum_first += bucketed;
        ++rep.tokens_first;
      } else {
        sum_subseq += bucketed;
        ++rep.tokens_subsequent;
      }
      PositionBucket& pb = curve[info.position];
      pb.t = info.position;
      pb.sum_neg_log2 += bucketed;
      ++pb.count;
    }
  }

  if (rep.tokens_total == 0) throw DataError("evaluate: corpus contains no scorable words");

  rep.overall_ppl = std::exp2(sum_plain / double(rep.tokens_total));
  rep.oracle_overall_ppl = std::exp2(sum_oracle / double(rep.tokens_total));
  rep.first_word_ppl = rep.tokens_first
                           ? std::exp2(sum_first / double(rep.tokens_first))
                           : std::numeric_limits<double>::quiet_NaN();
  rep.subsequent_ppl = rep.tokens_subsequent
                           ? std::exp2(sum_subseq / double(rep.tokens_subsequent))
                           : std::numeric_limits<double>::quiet_NaN();

  rep.curve.reserve(curve.size());
  for (auto& [t, bucket] : curve) rep.curve.push_back(bucket);
  return rep;
}

void position_curve_csv(const EvalReport& report, std::ostream& out) {
  out << "t,ppl,count\n";
  for (const PositionBucket& b : report.curve)
    out << b.t << ',' << fmt(b.ppl()) << ',' << b.count << '\n';
}

void position_curve_csv_file(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write curve CSV: " + path);
  position_curve_csv(report, out);
  if (!out.good()) throw IoError("write failure on curve CSV: " + path);
}

std::string report_text(const EvalReport& report) {
  std::ostringstream os;
  os << "overall_ppl=" << fmt(report.overall_ppl)
     << " first_word_ppl=" << fmt(report.first_word_ppl)
     << " subsequent_ppl=" << fmt(report.subsequent_ppl)
     << " oracle_overall_ppl=" << fmt(report.oracle_overall_ppl)
     << " tokens=" << report.tokens_total << " tokens_first=" << report.tokens_first
     << " tokens_subsequent=" << report.tokens_subsequent << " sentences=" << report.sentences
     << " oracle_mode=" << (report.oracle_mode ? 1 : 0);
  return os.str();
}

}  // namespace bflm
