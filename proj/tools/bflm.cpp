// bflm: train, evaluate, score, and generate with backward/forward
// language models and their sequential baselines.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "bflm/checkpoint.hpp"
#include "bflm/corpus.hpp"
#include "bflm/decoding.hpp"
#include "bflm/errors.hpp"
#include "bflm/evaluation.hpp"
#include "bflm/model.hpp"
#include "bflm/training.hpp"
#include "bflm/vocab.hpp"

using namespace bflm;

namespace {

constexpr std::uint64_t kEvalSeedSalt = 0x9e3779b97f4a7c15ull;

LoadedModel load_model_checked(const std::string& ckpt_path, const Vocabulary& vocab) {
  LoadedModel lm = load_checkpoint(ckpt_path);
  if (lm.vocab_hash != vocab.hash_hex())
    throw DataError("vocabulary file does not match the checkpoint (hash " + vocab.hash_hex() +
                    " vs " + lm.vocab_hash + ")");
  if (lm.model.config().vocab != vocab.size())
    throw DataError("vocabulary size does not match the checkpoint");
  return lm;
}

SplitPolicy make_policy(const std::string& name, std::size_t fixed_index) {
  if (name == "random") return SplitPolicy::random();
  if (name == "annotated") return SplitPolicy::annotated();
  if (name == "fixed") return SplitPolicy::fixed(fixed_index);
  throw DataError("unknown split policy: " + name);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

int cmd_build_vocab(const std::string& corpus, const std::string& out, std::size_t min_count,
                    std::size_t max_unk) {
  PreprocessOptions opts;
  opts.min_count = min_count;
  opts.max_unk = max_unk;
  PreprocessResult res = preprocess_file(corpus, opts);
  res.vocab.save_file(out);
  std::cout << "vocab_size=" << res.vocab.size() << " kept=" << res.kept
            << " dropped_unk=" << res.dropped_unk << " dropped_empty=" << res.dropped_empty
            << " lines=" << res.lines_read << " vocab_hash=" << res.vocab.hash_hex() << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus, valid, vocab, out_dir, resume;
  std::string variant = "syn_bf";
  std::size_t hidden = 0;
  std::size_t embedding = 50;
  TrainConfig cfg;
  std::string embedding_lr_mode = "tied";
  std::string split_policy = "random";
  std::size_t fixed_split = 1;
};

int cmd_train(const TrainArgs& args) {
  Vocabulary vocab = Vocabulary::load_file(args.vocab);
  std::vector<Sentence> train = load_corpus_file(args.corpus, vocab);
  if (train.empty()) throw DataError("training corpus is empty: " + args.corpus);
  std::vector<Sentence> valid;
  if (!args.valid.empty()) valid = load_corpus_file(args.valid, vocab);

  TrainConfig cfg = args.cfg;
  cfg.embedding_lr_mode = embedding_lr_mode_from_string(args.embedding_lr_mode);
  cfg.split_policy = make_policy(args.split_policy, args.fixed_split);
  cfg.validate();

  std::optional<LoadedModel> resumed;
  if (!args.resume.empty()) {
    resumed = load_model_checked(args.resume, vocab);
    resumed->train_config.max_epochs = cfg.max_epochs;  // allow extending the run
    resumed->train_config.split_policy = cfg.split_policy;
    cfg = resumed->train_config;
  }

  ModelConfig mc;
  mc.variant = variant_from_string(args.variant);
  mc.hidden = args.hidden;
  mc.embedding = args.embedding;
  mc.vocab = vocab.size();
  mc.seed = cfg.seed;

  Model model = resumed ? std::move(resumed->model) : Model(mc);
  OptimizerState opt =
      resumed ? std::move(resumed->opt) : OptimizerState::fresh(model.params(), cfg);
  TrainProgress progress = resumed ? resumed->progress : TrainProgress{};
  DetRng rng = resumed ? resumed->rng : DetRng(cfg.seed);
  if (!resumed) model.init_params(cfg.seed);

  std::cout << "variant=" << to_string(model.config().variant)
            << " hidden=" << model.config().resolved_hidden()
            << " embedding=" << model.config().embedding << " vocab=" << model.config().vocab
            << " sentences=" << train.size() << " seed=" << cfg.seed << "\n";

  TrainRunResult res = run_training(model, train, valid.empty() ? nullptr : &valid, cfg, opt,
                                    progress, rng, args.out_dir, vocab.hash_hex(), std::cout);
  std::cout << "done epochs=" << progress.epoch
            << " final_train_loss=" << fmt(res.final_train_loss);
  if (!valid.empty()) std::cout << " best_val_ppl=" << fmt(res.best_val_ppl);
  if (!res.best_path.empty()) std::cout << " best=" << res.best_path;
  if (!res.latest_path.empty()) std::cout << " latest=" << res.latest_path;
  std::cout << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, vocab, corpus, curve;
  bool oracle = false;
  std::string split_policy = "random";
  std::size_t fixed_split = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int cmd_eval(const EvalArgs& args) {
  Vocabulary vocab = Vocabulary::load_file(args.vocab);
  LoadedModel lm = load_model_checked(args.checkpoint, vocab);
  std::vector<Sentence> corpus = load_corpus_file(args.corpus, vocab);
  if (corpus.empty()) throw DataError("evaluation corpus is empty: " + args.corpus);

  const std::uint64_t seed = args.seed_given ? args.seed : (lm.train_config.seed ^ kEvalSeedSalt);
  DetRng rng(seed);
  EvalReport rep = evaluate(lm.model, corpus, args.oracle,
                            make_policy(args.split_policy, args.fixed_split), &rng);
  std::cout << report_text(rep) << "\n";
  if (!args.curve.empty()) {
    position_curve_csv_file(rep, args.curve);
    std::cout << "curve=" << args.curve << " rows=" << rep.curve.size() << "\n";
  }
  return 0;
}

struct GenerateArgs {
  std::string checkpoint, vocab, word;
  std::string strategy = "greedy";
  std::size_t n = 1;
  double temperature = 1.0;
  std::size_t beam_width = 5;
  std::uint64_t seed = 0;
  std::size_t max_len = 20;
  bool ban_unk = false;
  bool strict = false;
};

int list_nearest_by_embedding(const Model& model, const Vocabulary& vocab, std::ostream& os) {
  const ParamStore& store = model.params();
  const std::string emb_name = store.contains("emb.E") ? "emb.E" : "fw.emb.E";
  const Tensor& E = store.value(store.index_of(emb_name));
  const auto unk_row = E.row(Vocabulary::kUnk);
  std::vector<std::pair<double, int>> ranked;
  for (std::size_t id = Vocabulary::kReserved; id < E.dim(0); ++id) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < E.dim(1); ++j) {
      const double diff = E.at(id, j) - unk_row[j];
      d2 += diff * diff;
    }
    ranked.emplace_back(d2, static_cast<int>(id));
  }
  std::sort(ranked.begin(), ranked.end());
  os << "nearest_in_vocab=";
  for (std::size_t i = 0; i < std::min<std::size_t>(5, ranked.size()); ++i)
    os << (i ? "," : "") << vocab.token_of(ranked[i].second);
  os << "\n";
  return 2;
}

int cmd_generate(const GenerateArgs& args) {
  Vocabulary vocab = Vocabulary::load_file(args.vocab);
  LoadedModel lm = load_model_checked(args.checkpoint, vocab);

  const std::vector<std::string> toks = tokenize(ascii_lower(args.word));
  if (toks.size() != 1) throw ContractViolation("--word must be a single token");
  std::optional<int> wanted = vocab.find(toks[0]);
  if (!wanted) {
    if (args.strict) {
      std::cerr << "error: word '" << toks[0] << "' is not in the vocabulary\n";
      return list_nearest_by_embedding(lm.model, vocab, std::cerr);
    }
    std::cerr << "warning: word '" << toks[0] << "' is not in the vocabulary; using "
              << vocab.token_of(Vocabulary::kUnk) << "\n";
    wanted = Vocabulary::kUnk;
  }

  DecodeConfig cfg;
  cfg.temperature = args.temperature;
  cfg.seed = args.seed;
  cfg.beam_width = args.beam_width;
  cfg.max_len_per_chain = args.max_len;
  if (args.ban_unk) cfg.banned.insert(Vocabulary::kUnk);

  if (args.strategy == "greedy")
    cfg.strategy = DecodeConfig::Strategy::Greedy;
  else if (args.strategy == "sample")
    cfg.strategy = DecodeConfig::Strategy::Sample;
  else if (args.strategy == "beam")
    cfg.strategy = DecodeConfig::Strategy::Beam;
  else
    throw DataError("unknown strategy: " + args.strategy);

  if (cfg.strategy == DecodeConfig::Strategy::Beam) {
    const std::size_t width = std::max(args.beam_width, args.n);
    std::vector<GenerationRecord> hyps = beam_decode(lm.model, *wanted, width, cfg);
    for (std::size_t i = 0; i < std::min(args.n, hyps.size()); ++i)
      std::cout << format_record(vocab, hyps[i]) << "\n";
    return 0;
  }

  DetRng rng(args.seed);
  for (std::size_t i = 0; i < args.n; ++i)
    std::cout << format_record(vocab, generate(lm.model, *wanted, cfg, rng)) << "\n";
  return 0;
}

struct ScoreArgs {
  std::string checkpoint, vocab, sentence;
  std::size_t split = 0;  // 0 = unset
  bool marginal = false;
  bool uniform_prior = false;
  std::size_t marginal_cap = 32;
  bool oracle = false;
};

const char* kind_name(TermInfo::Kind k) {
  switch (k) {
    case TermInfo::Kind::Word: return "word";
    case TermInfo::Kind::ChainEos: return "eos";
    case TermInfo::Kind::PadEos: return "pad";
  }
  return "?";
}

const char* chain_name(TermInfo::Chain c) {
  switch (c) {
    case TermInfo::Chain::Seq: return "seq";
    case TermInfo::Chain::Backward: return "bw";
    case TermInfo::Chain::Forward: return "fw";
  }
  return "?";
}

int cmd_score(const ScoreArgs& args) {
  Vocabulary vocab = Vocabulary::load_file(args.vocab);
  LoadedModel lm = load_model_checked(args.checkpoint, vocab);

  std::vector<int> ids;
  for (const std::string& t : tokenize(ascii_lower(args.sentence))) {
    std::optional<int> id = vocab.find(t);
    if (!id) std::cerr << "notice: '" << t << "' is out of vocabulary, mapped to <unk>\n";
    ids.push_back(id.value_or(Vocabulary::kUnk));
  }
  if (ids.empty()) throw DataError("--sentence contains no tokens");

  if (args.marginal) {
    if (ids.size() > args.marginal_cap)
      throw DataError("sentence length " + std::to_string(ids.size()) +
                      " exceeds --marginal-cap " + std::to_string(args.marginal_cap));
    for (std::size_t s = 1; s <= ids.size(); ++s) {
      JointBreakdown jb = lm.model.joint_logprob(SplitSentence(ids, s), args.oracle);
      std::cout << "split=" << s << " logprob=" << fmt(jb.total) << "\n";
    }
    const double marg = lm.model.marginal_logprob(ids, args.marginal_cap, args.uniform_prior);
    std::cout << "marginal=" << fmt(marg) << (args.uniform_prior ? " prior=uniform" : "") << "\n";
    return 0;
  }

  const std::size_t s = args.split == 0 ? 1 : args.split;
  if (s > ids.size()) throw DataError("--split exceeds the sentence length");
  JointBreakdown jb = lm.model.joint_logprob(SplitSentence(ids, s), args.oracle);
  for (std::size_t i = 0; i < jb.terms.size(); ++i) {
    const TermInfo& t = jb.terms[i];
    std::cout << "term=" << i + 1 << " chain=" << chain_name(t.chain)
              << " kind=" << kind_name(t.kind) << (t.is_split ? " split=1" : "")
              << " pos=" << t.position << " target=" << vocab.token_of(t.target)
              << " logp=" << fmt(t.logp) << "\n";
  }
  std::cout << "total=" << fmt(jb.total) << " terms=" << jb.terms.size()
            << " oracle=" << (args.oracle ? 1 : 0) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"backward/forward language models: build-vocab, train, eval, generate, score"};
  app.require_subcommand(1);

  // build-vocab
  auto* sv = app.add_subcommand("build-vocab", "build a vocabulary from a corpus");
  std::string bv_corpus, bv_out;
  std::size_t bv_min_count = 10, bv_max_unk = 3;
  sv->add_option("--corpus", bv_corpus, "input corpus, one sentence per line")
      ->required()
      ->check(CLI::ExistingFile);
  sv->add_option("--out", bv_out, "output vocabulary file")->required();
  sv->add_option("--min-count", bv_min_count, "tokens with frequency <= this become <unk>");
  sv->add_option("--max-unk", bv_max_unk, "drop sentences with more <unk>s than this");

  // train
  auto* st = app.add_subcommand("train", "train a model");
  TrainArgs ta;
  st->add_option("--corpus", ta.corpus, "training corpus")->required()->check(CLI::ExistingFile);
  st->add_option("--valid", ta.valid, "validation corpus")->check(CLI::ExistingFile);
  st->add_option("--vocab", ta.vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  st->add_option("--out", ta.out_dir, "checkpoint output directory")->required();
  st->add_option("--variant", ta.variant, "seq|info_init|info_all|sep_bf|syn_bf|asyn_bf")
      ->check(CLI::IsMember({"seq", "info_init", "info_all", "sep_bf", "syn_bf", "asyn_bf"}));
  st->add_option("--hidden", ta.hidden, "hidden units (0 = variant default: 100, syn 200)");
  st->add_option("--embedding", ta.embedding, "embedding size");
  st->add_option("--batch-size", ta.cfg.batch_size, "sentences per update");
  st->add_option("--lr", ta.cfg.lr0, "initial learning rate");
  st->add_option("--lr-decay", ta.cfg.lr_decay, "per-epoch multiplicative decay");
  st->add_option("--rms-decay", ta.cfg.rms_decay, "rmsprop moving-average decay");
  st->add_option("--epsilon", ta.cfg.epsilon, "rmsprop damping term");
  st->add_option("--clip", ta.cfg.clip, "element-wise gradient clip");
  st->add_option("--epochs", ta.cfg.max_epochs, "max epochs");
  st->add_option("--seed", ta.cfg.seed, "training seed");
  st->add_option("--patience", ta.cfg.patience, "early-stopping patience (epochs)");
  st->add_option("--embedding-lr-mode", ta.embedding_lr_mode, "tied|paper-literal")
      ->check(CLI::IsMember({"tied", "paper-literal"}));
  st->add_option("--split-policy", ta.split_policy, "random|annotated|fixed")
      ->check(CLI::IsMember({"random", "annotated", "fixed"}));
  st->add_option("--fixed-split", ta.fixed_split, "split index for --split-policy fixed");
  st->add_option("--resume", ta.resume, "checkpoint to resume from")->check(CLI::ExistingFile);

  // eval
  auto* se = app.add_subcommand("eval", "perplexity report on a corpus");
  EvalArgs ea;
  se->add_option("--checkpoint", ea.checkpoint, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  se->add_option("--vocab", ea.vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  se->add_option("--corpus", ea.corpus, "corpus to score")->required()->check(CLI::ExistingFile);
  se->add_flag("--oracle", ea.oracle, "treat the split word as given (p(w_s) = 1)");
  se->add_option("--curve", ea.curve, "write the position/PPL curve CSV here");
  se->add_option("--split-policy", ea.split_policy, "random|annotated|fixed")
      ->check(CLI::IsMember({"random", "annotated", "fixed"}));
  se->add_option("--fixed-split", ea.fixed_split, "split index for --split-policy fixed");
  auto* eseed = se->add_option("--seed", ea.seed, "split-stream seed (default: derived)");

  // generate
  auto* sg = app.add_subcommand("generate", "generate sentences containing a word");
  GenerateArgs ga;
  sg->add_option("--checkpoint", ga.checkpoint, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  sg->add_option("--vocab", ga.vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  sg->add_option("--word", ga.word, "the word that must appear")->required();
  sg->add_option("--strategy", ga.strategy, "greedy|sample|beam")
      ->check(CLI::IsMember({"greedy", "sample", "beam"}));
  sg->add_option("--n", ga.n, "number of sentences");
  sg->add_option("--temperature", ga.temperature, "sampling temperature");
  sg->add_option("--beam-width", ga.beam_width, "beam width");
  sg->add_option("--seed", ga.seed, "sampling seed");
  sg->add_option("--max-len", ga.max_len, "max tokens per chain");
  sg->add_flag("--ban-unk", ga.ban_unk, "never emit <unk>");
  sg->add_flag("--strict", ga.strict, "refuse out-of-vocabulary words");

  // score
  auto* ss = app.add_subcommand("score", "log-probability breakdown of a sentence");
  ScoreArgs sa;
  ss->add_option("--checkpoint", sa.checkpoint, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  ss->add_option("--vocab", sa.vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  ss->add_option("--sentence", sa.sentence, "whitespace-tokenized sentence")->required();
  ss->add_option("--split", sa.split, "1-based split index (default 1)");
  ss->add_flag("--marginal", sa.marginal, "marginalize over all split positions");
  ss->add_flag("--uniform-prior", sa.uniform_prior, "uniform 1/m split prior in the marginal");
  ss->add_option("--marginal-cap", sa.marginal_cap, "refuse marginals beyond this length");
  ss->add_flag("--oracle", sa.oracle, "exclude the split-word factor");

  // key=value config file with strict keys; subcommand options live in a
  // [subcommand] section (or use dotted keys such as train.epochs)
  app.set_config("--config", "", "read options from a key=value config file");
  app.allow_config_extras(CLI::config_extras_mode::error);
  bool dump_config = false;
  for (CLI::App* sub : {sv, st, se, sg, ss}) {
    sub->fallthrough(true);
    sub->add_flag("--dump-config", dump_config, "print the effective config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (dump_config) {
      std::cout << app.config_to_str(false, false);
      return 0;
    }
    if (sub == sv) return cmd_build_vocab(bv_corpus, bv_out, bv_min_count, bv_max_unk);
    if (sub == st) return cmd_train(ta);
    if (sub == se) {
      ea.seed_given = eseed->count() > 0;
      return cmd_eval(ea);
    }
    if (sub == sg) return cmd_generate(ga);
    if (sub == ss) return cmd_score(sa);
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return 3;
  } catch (const ContractViolation& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
