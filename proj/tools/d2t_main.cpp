// Command-line surface for the data-to-text pipeline: dataset ingestion,
// linearization, tokenizer training, span-mask pretraining, fine-tuning,
// prediction, and evaluation. Every subcommand writes a .manifest.json
// sidecar with the config snapshot, input hashes, and seed.
//
// Exit codes: 0 success, 1 validation error (bad flags/files/data),
// 2 internal error.

#include <atomic>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "d2t/d2t.hpp"

namespace {

using namespace d2t;

// ----------------------------- shared helpers -----------------------------

struct CommonFlags {
  uint64_t seed = 0;
  int threads = 1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool require_out = true) {
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--threads", f.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  auto* out = cmd->add_option("--out", f.out, "Output path");
  if (require_out) out->required();
}

RunManifest make_manifest(const std::string& command, const nlohmann::json& config,
                          const std::vector<std::string>& inputs, uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config = config;
  m.seed = seed;
  for (const std::string& path : inputs) m.input_hashes[path] = file_sha256(path);
  return m;
}

std::vector<Example> load_dataset_file(const std::string& path, DataFormat format,
                                       bool print_report = false) {
  const auto [examples, report] = parse_dataset_lines(read_lines(path), format);
  if (print_report || report.rejected > 0) {
    std::cerr << path << ": parsed " << report.parsed << ", rejected " << report.rejected
              << "\n";
    for (const auto& [line, msg] : report.violations) {
      std::cerr << "  line " << line << ": " << msg << "\n";
    }
  }
  if (examples.empty()) {
    throw ValidationError("no valid examples in " + path);
  }
  return examples;
}

// Deterministic index-sharded parallel map used for decoding.
template <class Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (threads == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

// ----------------------------- subcommands -----------------------------

int cmd_synth(const SyntheticSpec& spec, const CommonFlags& flags,
              const std::string& command_line) {
  Dataset ds = generate_synthetic(spec);
  const std::string base = flags.out;
  write_file(base + "/train.jsonl", serialize_examples(ds.train));
  write_file(base + "/dev.jsonl", serialize_examples(ds.dev));
  write_file(base + "/test.jsonl", serialize_examples(ds.test));
  nlohmann::json cfg{{"n_train", spec.n_train},       {"n_dev", spec.n_dev},
                     {"n_test", spec.n_test},         {"n_entities", spec.n_entities},
                     {"n_relations", spec.n_relations}, {"holdout_relations", spec.holdout_relations}};
  write_run_manifest(base + "/train.jsonl", make_manifest(command_line, cfg, {}, spec.seed));
  std::cout << "wrote " << ds.train.size() << "/" << ds.dev.size() << "/" << ds.test.size()
            << " examples to " << base << "\n";
  return 0;
}

int cmd_ingest(const std::string& in, const std::string& format_str, const CommonFlags& flags,
               const std::string& command_line) {
  const DataFormat format = data_format_from_string(format_str);
  const auto [examples, report] = parse_dataset_lines(read_lines(in), format);
  write_file(flags.out, serialize_examples(examples));
  nlohmann::json cfg{{"format", format_str}, {"in", in}};
  write_run_manifest(flags.out, make_manifest(command_line, cfg, {in}, flags.seed));
  std::cout << "parsed " << report.parsed << ", rejected " << report.rejected << "\n";
  for (const auto& [line, msg] : report.violations) {
    std::cout << "  line " << line << ": " << msg << "\n";
  }
  return 0;
}

int cmd_linearize(const std::string& dataset_path, const std::string& format_str,
                  const std::string& out_format, bool no_prefix, bool lowercase,
                  const CommonFlags& flags, const std::string& command_line) {
  const DataFormat format = data_format_from_string(format_str);
  const auto examples = load_dataset_file(dataset_path, format);
  LinearizationConfig lcfg;
  lcfg.include_task_prefix = !no_prefix;
  lcfg.lowercase = lowercase;

  std::string content;
  if (out_format == "tsv") {
    for (const auto& p : linearize_corpus_train(examples, lcfg)) {
      content += p.source + "\t" + p.target + "\n";
    }
  } else if (out_format == "jsonl") {
    for (const auto& item : linearize_corpus_eval(examples, lcfg)) {
      nlohmann::json j{{"id", item.id},
                       {"source", item.source},
                       {"references", item.references},
                       {"subset", subset_name(item.subset)}};
      content += j.dump() + "\n";
    }
  } else {
    throw ValidationError("--format must be tsv or jsonl, got '" + out_format + "'");
  }
  write_file(flags.out, content);
  nlohmann::json cfg{{"data_format", format_str},
                     {"format", out_format},
                     {"include_task_prefix", lcfg.include_task_prefix},
                     {"lowercase", lcfg.lowercase}};
  write_run_manifest(flags.out,
                     make_manifest(command_line, cfg, {dataset_path}, flags.seed));
  std::cout << "linearized " << examples.size() << " examples\n";
  return 0;
}

int cmd_train_tokenizer(const std::string& in, int vocab_size, const CommonFlags& flags,
                        const std::string& command_line) {
  const auto lines = read_lines(in);
  const Vocab vocab = train_bpe(lines, vocab_size);
  write_file(flags.out, vocab_to_json(vocab).dump(2) + "\n");
  nlohmann::json cfg{{"in", in}, {"vocab_size", vocab_size}};
  write_run_manifest(flags.out, make_manifest(command_line, cfg, {in}, flags.seed));
  std::cout << "trained vocab of " << vocab.size() << " pieces (" << vocab.merges.size()
            << " merges), hash " << vocab_hash(vocab).substr(0, 12) << "\n";
  return 0;
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocab: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("vocab file " + path + " unreadable: " + e.what());
  }
  return vocab_from_json(j);
}

int cmd_pretrain(const std::string& corpus_path, const std::string& vocab_path,
                 const std::string& size, const TrainConfig& tcfg_in, const SpanMaskSpec& spec,
                 int max_len, const CommonFlags& flags, const std::string& command_line) {
  const Vocab vocab = load_vocab(vocab_path);
  TrainConfig tcfg = tcfg_in;
  tcfg.seed = flags.seed;
  tcfg.mode = TrainMode::Pretrain;
  const ModelConfig cfg = make_model_config(size_tag_from_string(size), vocab.size(), max_len);

  std::vector<std::vector<int>> corpus;
  for (const std::string& line : read_lines(corpus_path)) {
    const std::string norm = normalize_whitespace(line);
    if (norm.empty()) continue;
    auto ids = encode(vocab, norm);
    if (ids.size() >= 2) corpus.push_back(std::move(ids));
  }
  const ModelCheckpoint ckpt = pretrain(corpus, cfg, tcfg, spec, vocab_hash(vocab), corpus_path);
  save_checkpoint(ckpt, flags.out);
  nlohmann::json cfgj{{"size", size},
                      {"max_steps", tcfg.max_steps},
                      {"batch_size", tcfg.batch_size},
                      {"lr", tcfg.learning_rate},
                      {"corruption_rate", spec.corruption_rate},
                      {"mean_span_length", spec.mean_span_length},
                      {"max_len", max_len}};
  write_run_manifest(flags.out, make_manifest(command_line, cfgj,
                                              {corpus_path, vocab_path}, flags.seed));
  std::cout << "pretrained " << size << " for " << tcfg.max_steps << " steps ("
            << param_count(ckpt.params) << " parameters)\n";
  return 0;
}

std::vector<FinetunePair> load_pairs_tsv(const std::string& path, const Vocab& vocab) {
  std::vector<FinetunePair> pairs;
  int64_t line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError(path + " line " + std::to_string(line_no) +
                            ": expected source TAB target");
    }
    FinetunePair p;
    p.source = encode(vocab, normalize_whitespace(line.substr(0, tab)));
    p.target = encode(vocab, normalize_whitespace(line.substr(tab + 1)));
    if (p.source.empty() || p.target.empty()) {
      throw ValidationError(path + " line " + std::to_string(line_no) +
                            ": empty source or target after tokenization");
    }
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw ValidationError("no training pairs in " + path);
  return pairs;
}

struct EvalFileItem {
  std::string id;
  std::string source;
  std::vector<std::string> references;
  std::string subset;
};

std::vector<EvalFileItem> load_eval_jsonl(const std::string& path) {
  std::vector<EvalFileItem> items;
  int64_t line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      EvalFileItem item;
      item.id = j.contains("id") ? j["id"].get<std::string>() : std::to_string(line_no);
      item.source = normalize_whitespace(j.at("source").get<std::string>());
      for (const auto& r : j.at("references")) {
        item.references.push_back(normalize_whitespace(r.get<std::string>()));
      }
      if (j.contains("subset")) item.subset = j["subset"].get<std::string>();
      items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (items.empty()) throw ValidationError("no eval items in " + path);
  return items;
}

int cmd_finetune(const std::string& train_path, const std::string& dev_path,
                 const std::string& vocab_path, const std::string& from_ckpt,
                 const std::string& size, const TrainConfig& tcfg_in, int max_len,
                 const CommonFlags& flags, const std::string& command_line) {
  const Vocab vocab = load_vocab(vocab_path);
  TrainConfig tcfg = tcfg_in;
  tcfg.seed = flags.seed;
  tcfg.mode = TrainMode::Finetune;

  const auto pairs = load_pairs_tsv(train_path, vocab);
  std::vector<DevItem> dev;
  for (const auto& item : load_eval_jsonl(dev_path)) {
    DevItem d;
    d.source = encode(vocab, item.source);
    d.references = item.references;
    dev.push_back(std::move(d));
  }

  std::optional<ModelCheckpoint> start;
  ModelConfig cfg;
  if (!from_ckpt.empty()) {
    start = load_checkpoint(from_ckpt);
    cfg = start->cfg;
  } else {
    cfg = make_model_config(size_tag_from_string(size), vocab.size(), max_len);
  }

  const FinetuneResult result = finetune(start, cfg, pairs, tcfg, dev, vocab, train_path);
  const ModelCheckpoint& best = result.snapshots[result.selected];
  save_checkpoint(best, flags.out);

  std::cout << "step   dev BLEU\n";
  for (size_t i = 0; i < result.snapshots.size(); ++i) {
    std::cout << result.snapshots[i].step << "  " << *result.snapshots[i].dev_bleu
              << (i == result.selected ? "  <- selected" : "") << "\n";
  }
  nlohmann::json cfgj{{"train", train_path},   {"dev", dev_path},
                      {"from", from_ckpt},     {"size", size},
                      {"max_steps", tcfg.max_steps}, {"eval_every", tcfg.eval_every},
                      {"batch_size", tcfg.batch_size}, {"lr", tcfg.learning_rate}};
  std::vector<std::string> inputs{train_path, dev_path, vocab_path};
  if (!from_ckpt.empty()) inputs.push_back(from_ckpt);
  write_run_manifest(flags.out, make_manifest(command_line, cfgj, inputs, flags.seed));
  return 0;
}

int cmd_predict(const std::string& data_path, const std::string& format_str,
                const std::string& ckpt_path, const std::string& vocab_path, int beam,
                int max_len, bool no_prefix, const CommonFlags& flags,
                const std::string& command_line) {
  const Vocab vocab = load_vocab(vocab_path);
  const ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.provenance.vocab_hash != vocab_hash(vocab)) {
    throw ValidationError("predict: vocab hash mismatch between checkpoint and --vocab");
  }
  const auto examples = load_dataset_file(data_path, data_format_from_string(format_str));
  LinearizationConfig lcfg;
  lcfg.include_task_prefix = !no_prefix;
  const auto items = linearize_corpus_eval(examples, lcfg);

  std::vector<std::string> hyps(items.size());
  parallel_for(items.size(), flags.threads, [&](size_t i) {
    const auto src = encode(vocab, items[i].source);
    const auto ids = beam > 1 ? beam_decode(ckpt.params, ckpt.cfg, src, beam, max_len)
                              : greedy_decode(ckpt.params, ckpt.cfg, src, max_len);
    hyps[i] = decode(vocab, ids);
  });

  std::string content;
  for (size_t i = 0; i < items.size(); ++i) {
    content += nlohmann::json{{"id", items[i].id}, {"hypothesis", hyps[i]}}.dump() + "\n";
  }
  write_file(flags.out, content);
  nlohmann::json cfgj{{"data", data_path}, {"data_format", format_str},
                      {"beam", beam},      {"max_len", max_len},
                      {"ckpt", ckpt_path}};
  write_run_manifest(flags.out, make_manifest(command_line, cfgj,
                                              {data_path, ckpt_path, vocab_path}, flags.seed));
  std::cout << "decoded " << items.size() << " examples (beam " << beam << ")\n";
  return 0;
}

int cmd_evaluate(const std::string& dataset_path, const std::string& format_str,
                 const std::string& pred_path, const std::string& metrics_csv,
                 const CommonFlags& flags, const std::string& command_line) {
  const auto examples = load_dataset_file(dataset_path, data_format_from_string(format_str));

  std::map<std::string, std::string> pred_by_id;
  int64_t line_no = 0;
  for (const std::string& line : read_lines(pred_path)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      pred_by_id[j.at("id").get<std::string>()] =
          normalize_whitespace(j.at("hypothesis").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(pred_path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  std::vector<std::string> hyps;
  for (const Example& ex : examples) {
    auto it = pred_by_id.find(ex.id);
    if (it == pred_by_id.end()) {
      throw ValidationError("no prediction for example id '" + ex.id + "' in " + pred_path);
    }
    hyps.push_back(it->second);
  }

  std::set<MetricKind> which;
  std::stringstream ss(metrics_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) which.insert(metric_kind_from_string(tok));
  }
  if (which.empty()) throw ValidationError("--metrics is empty");

  const MetricReport report = evaluate_subsets(examples, hyps, which);
  std::cout << format_report({{pred_path, report}});
  if (!flags.out.empty()) {
    write_file(flags.out, metric_report_to_json(report).dump(2) + "\n");
    nlohmann::json cfgj{{"dataset", dataset_path},
                        {"data_format", format_str},
                        {"pred", pred_path},
                        {"metrics", metrics_csv}};
    write_run_manifest(flags.out, make_manifest(command_line, cfgj,
                                                {dataset_path, pred_path}, flags.seed));
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& systems, const CommonFlags& flags,
               const std::string& command_line) {
  std::vector<std::pair<std::string, MetricReport>> reports;
  std::vector<std::string> inputs;
  for (const std::string& spec : systems) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("--system expects NAME=REPORT.json, got '" + spec + "'");
    }
    const std::string name = spec.substr(0, eq);
    const std::string path = spec.substr(eq + 1);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("report file " + path + " unreadable: " + e.what());
    }
    reports.emplace_back(name, metric_report_from_json(j));
    inputs.push_back(path);
  }
  const std::string table = format_report(reports);
  std::cout << table;
  if (!flags.out.empty()) {
    nlohmann::json bundle = report_bundle_to_json(reports);
    bundle["table"] = table;
    write_file(flags.out, bundle.dump(2) + "\n");
    write_run_manifest(flags.out,
                       make_manifest(command_line, nlohmann::json{{"systems", systems}},
                                     inputs, flags.seed));
  }
  return 0;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"data-to-text pipeline toolkit"};
  app.require_subcommand(1);
  const std::string command_line = join_args(argc, argv);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "Generate a synthetic triple-to-text dataset");
  SyntheticSpec synth_spec;
  CommonFlags synth_flags;
  synth->add_option("--train", synth_spec.n_train, "Training examples")->required();
  synth->add_option("--dev", synth_spec.n_dev, "Dev examples")->required();
  synth->add_option("--test", synth_spec.n_test, "Test examples")->required();
  synth->add_option("--entities", synth_spec.n_entities, "Entity inventory size")
      ->default_val(120);
  synth->add_option("--relations", synth_spec.n_relations, "Relation inventory size")
      ->default_val(24);
  synth->add_option("--holdout", synth_spec.holdout_relations,
                    "Relations held out of train/dev")
      ->default_val(2);
  add_common(synth, synth_flags);

  // --- ingest ---
  auto* ingest = app.add_subcommand("ingest", "Parse and validate a dataset JSONL file");
  std::string ingest_in, ingest_format;
  CommonFlags ingest_flags;
  ingest->add_option("--in", ingest_in, "Input JSONL")->required();
  ingest->add_option("--data-format", ingest_format, "webnlg|multiwoz|totto")->required();
  add_common(ingest, ingest_flags);

  // --- linearize ---
  auto* lin = app.add_subcommand("linearize", "Flatten structured inputs to strings");
  std::string lin_dataset, lin_format, lin_out_format = "tsv";
  bool lin_no_prefix = false, lin_lowercase = false;
  CommonFlags lin_flags;
  lin->add_option("--dataset", lin_dataset, "Dataset JSONL")->required();
  lin->add_option("--data-format", lin_format, "webnlg|multiwoz|totto")->required();
  lin->add_option("--format", lin_out_format, "tsv (training pairs) or jsonl (eval items)");
  lin->add_flag("--no-task-prefix", lin_no_prefix, "Omit the task prefix");
  lin->add_flag("--lowercase", lin_lowercase, "Lowercase field text");
  add_common(lin, lin_flags);

  // --- train-tokenizer ---
  auto* tok = app.add_subcommand("train-tokenizer", "Train the BPE vocabulary");
  std::string tok_in;
  int tok_vocab_size = 8000;
  CommonFlags tok_flags;
  tok->add_option("--in", tok_in, "Text corpus (one string per line)")->required();
  tok->add_option("--vocab-size", tok_vocab_size, "Total vocabulary size");
  add_common(tok, tok_flags);

  // --- pretrain ---
  auto* pre = app.add_subcommand("pretrain", "Span-mask pretraining on a text corpus");
  std::string pre_corpus, pre_vocab, pre_size = "small";
  TrainConfig pre_tcfg;
  pre_tcfg.max_steps = 1000;
  SpanMaskSpec pre_spec;
  int pre_max_len = 128;
  CommonFlags pre_flags;
  pre->add_option("--corpus", pre_corpus, "Text corpus")->required();
  pre->add_option("--vocab", pre_vocab, "Vocab JSON")->required();
  pre->add_option("--size", pre_size, "tiny|small|base");
  pre->add_option("--max-steps", pre_tcfg.max_steps, "Optimizer steps");
  pre->add_option("--batch-size", pre_tcfg.batch_size, "Batch size");
  pre->add_option("--lr", pre_tcfg.learning_rate, "Constant learning rate");
  pre->add_option("--corruption-rate", pre_spec.corruption_rate, "Masked token fraction");
  pre->add_option("--mean-span", pre_spec.mean_span_length, "Mean span length");
  pre->add_option("--max-len", pre_max_len, "Model max sequence length");
  add_common(pre, pre_flags);

  // --- finetune ---
  auto* ft = app.add_subcommand("finetune", "Fine-tune on linearized pairs");
  std::string ft_train, ft_dev, ft_vocab, ft_from, ft_size = "small";
  TrainConfig ft_tcfg;
  ft_tcfg.max_steps = 5000;
  int ft_max_len = 128;
  CommonFlags ft_flags;
  ft->add_option("--train", ft_train, "Training pairs TSV")->required();
  ft->add_option("--dev", ft_dev, "Dev JSONL with source/references")->required();
  ft->add_option("--vocab", ft_vocab, "Vocab JSON")->required();
  ft->add_option("--from", ft_from, "Starting checkpoint (fresh init when omitted)");
  ft->add_option("--size", ft_size, "tiny|small|base (fresh init only)");
  ft->add_option("--max-steps", ft_tcfg.max_steps, "Optimizer steps");
  ft->add_option("--eval-every", ft_tcfg.eval_every, "Steps between dev evaluations");
  ft->add_option("--batch-size", ft_tcfg.batch_size, "Batch size");
  ft->add_option("--lr", ft_tcfg.learning_rate, "Constant learning rate");
  ft->add_option("--max-len", ft_max_len, "Model max sequence length (fresh init only)");
  add_common(ft, ft_flags);

  // --- predict ---
  auto* pred = app.add_subcommand("predict", "Decode hypotheses for a dataset");
  std::string pred_data, pred_format, pred_ckpt, pred_vocab;
  int pred_beam = 1, pred_max_len = 128;
  bool pred_no_prefix = false;
  CommonFlags pred_flags;
  pred->add_option("--data", pred_data, "Dataset JSONL")->required();
  pred->add_option("--data-format", pred_format, "webnlg|multiwoz|totto")->required();
  pred->add_option("--ckpt", pred_ckpt, "Model checkpoint")->required();
  pred->add_option("--vocab", pred_vocab, "Vocab JSON")->required();
  pred->add_option("--beam", pred_beam, "Beam width (1 = greedy)");
  pred->add_option("--max-len", pred_max_len, "Decoding length cap");
  pred->add_flag("--no-task-prefix", pred_no_prefix, "Omit the task prefix");
  add_common(pred, pred_flags);

  // --- evaluate ---
  auto* ev = app.add_subcommand("evaluate", "Score predictions against a dataset");
  std::string ev_dataset, ev_format, ev_pred, ev_metrics = "bleu";
  CommonFlags ev_flags;
  ev->add_option("--dataset", ev_dataset, "Dataset JSONL")->required();
  ev->add_option("--data-format", ev_format, "webnlg|multiwoz|totto")->required();
  ev->add_option("--pred", ev_pred, "Predictions JSONL with id/hypothesis")->required();
  ev->add_option("--metrics", ev_metrics, "Comma list: bleu,ser,parent,meteor_lite");
  add_common(ev, ev_flags, /*require_out=*/false);

  // --- report ---
  auto* rep = app.add_subcommand("report", "Render a comparison table from report files");
  std::vector<std::string> rep_systems;
  CommonFlags rep_flags;
  rep->add_option("--system", rep_systems, "NAME=REPORT.json (repeatable)")->required();
  add_common(rep, rep_flags, /*require_out=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // CLI11 prints the flag/file diagnostic; exit 1 on error
  }

  try {
    if (*synth) {
      synth_spec.seed = synth_flags.seed;
      return cmd_synth(synth_spec, synth_flags, command_line);
    }
    if (*ingest) return cmd_ingest(ingest_in, ingest_format, ingest_flags, command_line);
    if (*lin) {
      return cmd_linearize(lin_dataset, lin_format, lin_out_format, lin_no_prefix,
                           lin_lowercase, lin_flags, command_line);
    }
    if (*tok) return cmd_train_tokenizer(tok_in, tok_vocab_size, tok_flags, command_line);
    if (*pre) {
      return cmd_pretrain(pre_corpus, pre_vocab, pre_size, pre_tcfg, pre_spec, pre_max_len,
                          pre_flags, command_line);
    }
    if (*ft) {
      return cmd_finetune(ft_train, ft_dev, ft_vocab, ft_from, ft_size, ft_tcfg, ft_max_len,
                          ft_flags, command_line);
    }
    if (*pred) {
      return cmd_predict(pred_data, pred_format, pred_ckpt, pred_vocab, pred_beam,
                         pred_max_len, pred_no_prefix, pred_flags, command_line);
    }
    if (*ev) return cmd_evaluate(ev_dataset, ev_format, ev_pred, ev_metrics, ev_flags,
                                 command_line);
    if (*rep) return cmd_report(rep_systems, rep_flags, command_line);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
