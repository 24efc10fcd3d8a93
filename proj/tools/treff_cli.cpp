// Command-line front end for the Treff adapter library.
//
// Exit codes: 0 success, 1 data/validation error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "treff_adapter.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw treff::Error(treff::ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) throw treff::Error(treff::ErrorCode::io, "write failed for " + path.string());
}

// Writes to `path`, or stdout when path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_text(path, text);
}

json manifest(const std::string& command, std::uint64_t base_seed, json config,
              const std::vector<std::pair<std::string, std::string>>& inputs) {
  json in = json::array();
  for (const auto& [role, path] : inputs)
    in.push_back({{"role", role}, {"path", path}, {"fnv1a64", treff::file_digest(path)}});
  return {{"tool", "treff_cli"},
          {"version", kToolVersion},
          {"command", command},
          {"base_seed", base_seed},
          {"config", std::move(config)},
          {"inputs", std::move(in)}};
}

struct Inputs {
  std::string audio;
  std::string text;
  double tau = treff::kDefaultLogitScale;
};

struct LoadedData {
  treff::SupportSet audio;
  treff::ZeroShotHead head;
};

LoadedData load(const Inputs& in) {
  auto audio = treff::read_labeled_embeddings(in.audio);
  auto [text, vocab] = treff::load_text_embeddings(in.text, &audio.vocab());
  auto aligned = treff::align_to_vocab(audio, vocab);
  return {std::move(aligned), treff::ZeroShotHead(text, std::move(vocab), in.tau)};
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  treff::SynthConfig cfg;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const auto data = treff::generate(a.cfg);
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  treff::write_embeddings(data.audio, dir / "audio.treffemb");
  treff::Labels identity(data.vocab.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<treff::ClassId>(i);
  treff::write_embeddings(data.text, identity, data.vocab, dir / "text.treffemb");
  treff::write_embeddings(treff::EmbeddingSet(data.centers), identity, data.vocab, dir / "centers.treffemb");

  const json config = {{"classes", a.cfg.n_classes}, {"dim", a.cfg.dim},
                       {"per_class", a.cfg.per_class}, {"kappa", a.cfg.kappa},
                       {"text_noise", a.cfg.text_noise}, {"seed", a.cfg.seed}};
  const json out = {{"manifest", manifest("synth", a.cfg.seed, config, {})},
                    {"files", {(dir / "audio.treffemb").string(), (dir / "text.treffemb").string(),
                               (dir / "centers.treffemb").string()}}};
  write_text(dir / "synth.json", out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct ZeroShotArgs {
  Inputs in;
  std::string out;
};

int run_zeroshot(const ZeroShotArgs& a) {
  const auto data = load(a.in);
  const auto logits = treff::zsl_logits(data.head, data.audio.embeddings());
  const auto pred = treff::argmax_rows(logits);
  json items = json::array();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto truth = data.audio.labels()[i];
    correct += pred[i] == truth;
    items.push_back({{"index", i},
                     {"predicted", data.head.vocab().name(pred[i])},
                     {"label", data.head.vocab().name(truth)},
                     {"score", logits(static_cast<Eigen::Index>(i), pred[i])}});
  }
  const json config = {{"audio", a.in.audio}, {"text", a.in.text}, {"tau", a.in.tau}};
  const json out = {{"manifest", manifest("zeroshot", 0, config, {{"audio", a.in.audio}, {"text", a.in.text}})},
                    {"accuracy", static_cast<double>(correct) / static_cast<double>(pred.size())},
                    {"predictions", std::move(items)}};
  emit(a.out, out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Inputs in;
  std::string method = "treff-free";
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t queries = 5;
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  int epochs = 20;
  double lr = 1e-3;
  bool no_self = false;
  std::string phi_sign = "corrected";
  std::string loss = "full";
  double b = treff::kDefaultTemperature;
  double beta = treff::kDefaultTemperature;
  unsigned threads = 1;
  std::string shots = "1,2,4,8,16";
  std::string out;
  std::string json_out;
};

void add_eval_options(CLI::App* cmd, EvalArgs& a, bool curve) {
  const std::vector<std::string> methods = {"zsl", "treff-free", "treff-ft", "tip-free", "tip-ft", "proto", "match"};
  cmd->add_option("--method", a.method, "Classification head")->check(CLI::IsMember(methods))->capture_default_str();
  cmd->add_option("--audio", a.in.audio, "Labeled audio embeddings (TREFFEMB)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--text", a.in.text, "Class text embeddings (TREFFEMB)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--tau", a.in.tau, "Zero-shot logit scale")->capture_default_str();
  cmd->add_option("--n-way", a.n_way, "Classes per episode")->check(CLI::PositiveNumber)->capture_default_str();
  if (!curve)
    cmd->add_option("--k-shot", a.k_shot, "Supports per class")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--episodes", a.episodes, "Number of episodes")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", a.seed, "Base seed; episode i uses seed + i")->capture_default_str();
  cmd->add_option("--queries-per-class", a.queries, "Queries per class")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--epochs", a.epochs, "Fine-tuning epochs")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", a.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_flag("--no-self", a.no_self, "Leave each support out of its own training affinity row");
  cmd->add_option("--phi-sign", a.phi_sign, "Sharpness sign")->check(CLI::IsMember({"corrected", "paper"}))->capture_default_str();
  cmd->add_option("--loss", a.loss, "Fine-tuning objective")->check(CLI::IsMember({"full", "calm-only"}))->capture_default_str();
  cmd->add_option("--b", a.b, "CALM temperature")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--beta", a.beta, "TIP cache temperature")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--threads", a.threads, "Episode worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  if (curve) {
    cmd->add_option("--shots", a.shots, "Comma-separated k values")->capture_default_str();
    cmd->add_option("--out", a.out, "CSV output (default stdout)");
    cmd->add_option("--json", a.json_out, "Optional JSON output with manifest");
  } else {
    cmd->add_option("--out", a.out, "JSON output")->required();
  }
}

treff::MethodConfig method_config(const EvalArgs& a) {
  treff::MethodConfig mc;
  mc.method = treff::parse_method(a.method);
  mc.tau = a.in.tau;
  mc.b = a.b;
  mc.beta = a.beta;
  mc.phi_sign = treff::parse_phi_sign(a.phi_sign);
  mc.train.epochs = a.epochs;
  mc.train.learning_rate = a.lr;
  mc.train.include_self = !a.no_self;
  mc.train.loss = a.loss == "full" ? treff::FinetuneLoss::full : treff::FinetuneLoss::calm_only;
  mc.train.seed = a.seed;
  return mc;
}

json eval_config(const EvalArgs& a) {
  return {{"method", a.method},       {"audio", a.in.audio},   {"text", a.in.text},
          {"tau", a.in.tau},          {"n_way", a.n_way},      {"k_shot", a.k_shot},
          {"queries_per_class", a.queries}, {"episodes", a.episodes}, {"seed", a.seed},
          {"epochs", a.epochs},       {"lr", a.lr},            {"include_self", !a.no_self},
          {"phi_sign", a.phi_sign},   {"loss", a.loss},        {"b", a.b},
          {"beta", a.beta},           {"threads", a.threads}};
}

treff::EvalSpec eval_spec(const EvalArgs& a) {
  return {a.n_way, a.k_shot, a.queries, a.episodes, a.seed, a.threads};
}

int run_eval(const EvalArgs& a) {
  const auto mc = method_config(a);
  const auto data = load(a.in);
  const auto summary = treff::evaluate(mc, data.audio, data.head, eval_spec(a));
  const json out = {{"manifest", manifest("eval", a.seed, eval_config(a), {{"audio", a.in.audio}, {"text", a.in.text}})},
                    {"summary", treff::to_json(summary)}};
  write_text(a.out, out.dump(2) + "\n");
  return 0;
}

std::vector<std::size_t> parse_shots(const std::string& s) {
  std::vector<std::size_t> shots;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &used);
    } catch (const std::exception&) {
      throw UsageError("--shots: '" + tok + "' is not a positive integer");
    }
    if (used != tok.size() || v == 0) throw UsageError("--shots: '" + tok + "' is not a positive integer");
    shots.push_back(v);
  }
  if (shots.empty()) throw UsageError("--shots must list at least one k");
  return shots;
}

int run_curve(const EvalArgs& a) {
  const auto shots = parse_shots(a.shots);
  const auto mc = method_config(a);
  const auto data = load(a.in);
  const auto curve = treff::shot_curve(mc, data.audio, data.head, shots, eval_spec(a));

  std::string csv = std::string(treff::kCsvHeader) + "\n";
  json rows = json::array();
  for (const auto& [k, summary] : curve) {
    csv += treff::to_csv_row(summary) + "\n";
    rows.push_back(treff::to_json(summary));
  }
  emit(a.out, csv);
  if (!a.json_out.empty()) {
    json config = eval_config(a);
    config.erase("k_shot");
    config["shots"] = shots;
    const json out = {{"manifest", manifest("curve", a.seed, config, {{"audio", a.in.audio}, {"text", a.in.text}})},
                      {"curve", std::move(rows)}};
    write_text(a.json_out, out.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct FinetuneArgs {
  Inputs in;
  std::string out;
  std::string report;
  int epochs = 20;
  double lr = 1e-3;
  bool no_self = false;
  std::string phi_sign = "corrected";
  std::string loss = "full";
  double b = treff::kDefaultTemperature;
  std::uint64_t seed = 0;
};

int run_finetune(const FinetuneArgs& a) {
  const auto data = load(a.in);
  treff::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.lr;
  cfg.include_self = !a.no_self;
  cfg.loss = a.loss == "full" ? treff::FinetuneLoss::full : treff::FinetuneLoss::calm_only;
  cfg.seed = a.seed;
  const auto start = treff::identity_init(data.head.dim(), a.b, treff::parse_phi_sign(a.phi_sign));
  const auto fit = treff::treff_finetune(data.head, data.audio, cfg, start);
  treff::save_params(fit.final_params, a.out);

  const json config = {{"support", a.in.audio}, {"text", a.in.text}, {"tau", a.in.tau},
                       {"epochs", a.epochs},    {"lr", a.lr},        {"include_self", !a.no_self},
                       {"phi_sign", a.phi_sign}, {"loss", a.loss},   {"b", a.b},
                       {"seed", a.seed},        {"out", a.out}};
  const json out = {
      {"manifest", manifest("finetune", a.seed, config, {{"support", a.in.audio}, {"text", a.in.text}})},
      {"fit_report",
       {{"initial_loss", fit.initial_loss},
        {"loss_per_epoch", fit.loss_per_epoch},
        {"degenerate", fit.degenerate},
        {"final_alpha", fit.final_params.alpha},
        {"b", fit.final_params.b},
        {"params_file", a.out},
        {"params_sidecar", treff::params_sidecar_path(a.out).string()}}}};
  emit(a.report, out.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot adapters over frozen audio-language embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic clustered embedding benchmark");
  synth_cmd->add_option("--classes", synth.cfg.n_classes)->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--dim", synth.cfg.dim)->check(CLI::Range(2u, 1u << 20))->capture_default_str();
  synth_cmd->add_option("--per-class", synth.cfg.per_class)->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--kappa", synth.cfg.kappa)->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--text-noise", synth.cfg.text_noise)->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--seed", synth.cfg.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  ZeroShotArgs zs;
  auto* zs_cmd = app.add_subcommand("zeroshot", "Zero-shot predictions for every audio row");
  zs_cmd->add_option("--audio", zs.in.audio)->required()->check(CLI::ExistingFile);
  zs_cmd->add_option("--text", zs.in.text)->required()->check(CLI::ExistingFile);
  zs_cmd->add_option("--tau", zs.in.tau)->capture_default_str();
  zs_cmd->add_option("--out", zs.out, "JSON output (default stdout)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Episodic n-way k-shot evaluation");
  add_eval_options(eval_cmd, ev, false);

  EvalArgs cv;
  auto* curve_cmd = app.add_subcommand("curve", "Accuracy against number of shots (CSV)");
  add_eval_options(curve_cmd, cv, true);

  FinetuneArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune the adapter on a support set and save it");
  ft_cmd->add_option("--support", ft.in.audio)->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--text", ft.in.text)->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--out", ft.out, "Parameter file (W); scalars go to <out>.json")->required();
  ft_cmd->add_option("--report", ft.report, "FitReport JSON (default stdout)");
  ft_cmd->add_option("--tau", ft.in.tau)->capture_default_str();
  ft_cmd->add_option("--epochs", ft.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  ft_cmd->add_option("--lr", ft.lr)->check(CLI::PositiveNumber)->capture_default_str();
  ft_cmd->add_flag("--no-self", ft.no_self);
  ft_cmd->add_option("--phi-sign", ft.phi_sign)->check(CLI::IsMember({"corrected", "paper"}))->capture_default_str();
  ft_cmd->add_option("--loss", ft.loss)->check(CLI::IsMember({"full", "calm-only"}))->capture_default_str();
  ft_cmd->add_option("--b", ft.b)->check(CLI::PositiveNumber)->capture_default_str();
  ft_cmd->add_option("--seed", ft.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*zs_cmd) return run_zeroshot(zs);
    if (*eval_cmd) return run_eval(ev);
    if (*curve_cmd) return run_curve(cv);
    if (*ft_cmd) return run_finetune(ft);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const treff::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
