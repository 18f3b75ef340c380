// cart: command-line front end for the normalizer, metrics, formatter,
// session server and simulation harness.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <iterator>

#include <CLI11.hpp>

#include "cart/formatter.hpp"
#include "cart/metrics.hpp"
#include "cart/server.hpp"
#include "cart/session.hpp"
#include "cart/sim.hpp"

namespace {

using namespace cart;
namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  if (path.empty() || path == "-") return {std::istreambuf_iterator<char>(std::cin), {}};
  return read_file(path);
}

// Timed JSON when it parses as such, otherwise plain words without timing.
Transcript transcript_input(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_transcript(text);
  return words_from_text(text);
}

sim::AgentProfile load_profile(const std::string& path) {
  if (path.empty()) return {};
  try {
    return sim::agent_profile_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

// Either a timed transcript given on the command line, or the reference
// corrupted to `target` and spread over a 135 wpm reading.
Transcript sim_transcript(const std::string& transcript_path, const std::string& ref, double target, std::uint64_t seed) {
  if (!transcript_path.empty()) return load_transcript(transcript_path);
  const auto hyp = sim::seed_errors(ref, target, seed);
  return sim::synthetic_timing(hyp, sim::speech_duration_s(words_from_text(ref).size()));
}

std::vector<ScenarioKind> parse_scenarios(const std::string& list) {
  std::vector<ScenarioKind> out;
  std::stringstream in(list);
  for (std::string item; std::getline(in, item, ',');) out.push_back(scenario_from_string(item));
  return out;
}

std::atomic<bool> interrupted{false};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative live-caption correction toolkit"};
  app.require_subcommand(1);

  // normalize
  std::string norm_file;
  auto* normalize_cmd = app.add_subcommand("normalize", "Print the normalized form of a text");
  normalize_cmd->add_option("--file,file", norm_file, "Input file (default stdin)");

  // eval
  std::string ref_file, hyp_file, baseline_file, edited_file;
  bool as_json = false;
  auto* eval_cmd = app.add_subcommand("eval", "Word error rate of a hypothesis");
  eval_cmd->add_option("--ref", ref_file, "Reference text")->required();
  eval_cmd->add_option("--hyp", hyp_file, "Hypothesis text")->required();
  eval_cmd->add_flag("--json", as_json, "Emit the JSON report");

  auto* delta_cmd = app.add_subcommand("eval-delta", "Error reduction between a baseline and an edited text");
  delta_cmd->add_option("--ref", ref_file, "Reference text")->required();
  delta_cmd->add_option("--baseline", baseline_file, "Unedited text")->required();
  delta_cmd->add_option("--edited", edited_file, "Edited text")->required();

  // fmt
  std::string fmt_file, fmt_mode = "standard";
  auto* fmt_cmd = app.add_subcommand("fmt", "Paragraph and caption formatting");
  fmt_cmd->require_subcommand(1);
  auto* para_cmd = fmt_cmd->add_subcommand("paragraphs", "Split a transcript into paragraphs");
  para_cmd->add_option("--mode", fmt_mode, "standard or chunked")->check(CLI::IsMember({"standard", "chunked"}));
  para_cmd->add_option("--file,file", fmt_file, "Timed JSON or plain text (default stdin)");
  auto* cap_cmd = fmt_cmd->add_subcommand("captions", "Split text into two-line caption blocks");
  cap_cmd->add_option("--file,file", fmt_file, "Timed JSON or plain text (default stdin)");

  // serve
  std::uint16_t port = 7070;
  std::string config_file, bind_address = "127.0.0.1";
  std::int64_t grace_ms = 10'000;
  auto* serve_cmd = app.add_subcommand("serve", "Host a correction session over NDJSON/TCP");
  serve_cmd->add_option("--port", port, "TCP port (0 picks one)");
  serve_cmd->add_option("--bind", bind_address, "IPv4 address to listen on");
  serve_cmd->add_option("--config", config_file, "Session config JSON")->required();
  serve_cmd->add_option("--grace-ms", grace_ms, "Editing time after the last word");

  // replay
  std::string oplog_file, out_dir;
  auto* replay_cmd = app.add_subcommand("replay", "Rebuild session artifacts from an op log");
  replay_cmd->add_option("oplog", oplog_file, "oplog.ndjson")->required();
  replay_cmd->add_option("--ref", ref_file, "Reference text for metrics");
  replay_cmd->add_option("--out", out_dir, "Write final.txt, baseline.txt and metrics.json here");

  // sim, sweep, seed
  std::string scenario = "C", profile_file, transcript_file, scenario_list = "A,B,C,D", csv_file;
  double target = 0.093, speedup = 0;
  std::uint64_t seed = 42, first_seed = 1;
  std::size_t seed_count = 20;
  bool details = false;
  ref_file.clear();
  auto* sim_cmd = app.add_subcommand("sim", "Run one simulated correction session");
  sim_cmd->add_option("--scenario", scenario, "A, B, C or D");
  sim_cmd->add_option("--wer", target, "Baseline WER to seed");
  sim_cmd->add_option("--seed", seed, "Random seed");
  sim_cmd->add_option("--speedup", speedup, "Virtual seconds per wall second (0 runs unpaced)");
  sim_cmd->add_option("--profile", profile_file, "Agent profile JSON");
  sim_cmd->add_option("--ref", ref_file, "Reference text")->required();
  sim_cmd->add_option("--transcript", transcript_file, "Timed hypothesis JSON instead of seeded errors");
  sim_cmd->add_flag("--details", details, "Include agent counters");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run scenario x seed grids and write CSV");
  sweep_cmd->add_option("--scenarios", scenario_list, "Comma-separated scenarios");
  sweep_cmd->add_option("--seeds", seed_count, "Number of seeds");
  sweep_cmd->add_option("--first-seed", first_seed, "First seed");
  sweep_cmd->add_option("--wer", target, "Baseline WER to seed");
  sweep_cmd->add_option("--speedup", speedup, "Virtual seconds per wall second (0 runs unpaced)");
  sweep_cmd->add_option("--profile", profile_file, "Agent profile JSON");
  sweep_cmd->add_option("--ref", ref_file, "Reference text")->required();
  sweep_cmd->add_option("--transcript", transcript_file, "Timed hypothesis JSON instead of seeded errors");
  sweep_cmd->add_option("--csv", csv_file, "Output file (default stdout)");

  std::string timed_file;
  auto* seed_cmd = app.add_subcommand("seed", "Corrupt a reference to a target WER");
  seed_cmd->add_option("--ref", ref_file, "Reference text")->required();
  seed_cmd->add_option("--wer", target, "Target WER")->required();
  seed_cmd->add_option("--seed", seed, "Random seed");
  seed_cmd->add_option("--timed", timed_file, "Also write a 135 wpm timed transcript here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*normalize_cmd) {
      const auto r = Normalizer::standard().run(slurp(norm_file));
      for (const auto& w : r.warnings) std::cerr << "warning: unverbalized number '" << w.token << "'\n";
      std::cout << r.text.content << '\n';
    } else if (*eval_cmd) {
      const auto r = wer(read_file(ref_file), read_file(hyp_file));
      if (as_json) {
        auto j = to_json(r);
        j["schema"] = kWerSchema;
        std::cout << j.dump(2) << '\n';
      } else {
        std::cout << "WER " << r.wer() << " (S " << r.substitutions << ", D " << r.deletions << ", I " << r.insertions << ", N "
                  << r.ref_len << ")\n";
      }
    } else if (*delta_cmd) {
      std::cout << to_json(reduction_report(read_file(ref_file), read_file(baseline_file), read_file(edited_file))).dump(2) << '\n';
    } else if (*para_cmd) {
      const auto mode = fmt_mode == "chunked" ? ParagraphMode::Chunked : ParagraphMode::Standard;
      std::cout << render_paragraphs(format_transcript(transcript_input(slurp(fmt_file)), mode));
    } else if (*cap_cmd) {
      std::cout << render_captions(format_captions(join_words(transcript_input(slurp(fmt_file)))));
    } else if (*serve_cmd) {
      const fs::path path(config_file);
      const auto config = session_config_from_json(nlohmann::json::parse(read_file(config_file)), path.parent_path());
      SessionRegistry registry;
      const auto id = registry.create(config);
      ServerOptions options;
      options.port = port;
      options.bind_address = bind_address;
      options.finalize_grace_ms = grace_ms;
      TcpServer server(registry, options);
      server.on_finished = [](const std::string& sid, const SessionArtifacts& a) {
        std::cout << "finished " << sid;
        if (auto m = a.metrics_json()) std::cout << ' ' << nlohmann::json::parse(*m).dump();
        std::cout << std::endl;
      };
      server.start();
      std::signal(SIGINT, [](int) { interrupted = true; });
      std::signal(SIGTERM, [](int) { interrupted = true; });
      std::cout << "session " << id << " listening on " << bind_address << ':' << server.port() << std::endl;
      while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    } else if (*replay_cmd) {
      std::optional<std::string> ref;
      if (!ref_file.empty()) ref = read_file(ref_file);
      const auto a = replay_artifacts(read_file(oplog_file), ref);
      if (!out_dir.empty()) write_artifacts(out_dir, a);
      if (auto m = a.metrics_json()) std::cout << *m;
      else std::cout << a.final_text << '\n';
    } else if (*sim_cmd) {
      const auto ref = read_file(ref_file);
      const auto p = load_profile(profile_file);
      sim::SimOptions options;
      options.speedup = speedup;
      const auto r = sim::run_experiment(scenario_from_string(scenario), {p, p, p}, sim_transcript(transcript_file, ref, target, seed), ref,
                                         seed, options);
      std::cout << (details ? sim::to_json(r) : to_json(r.delta)).dump(2) << '\n';
    } else if (*sweep_cmd) {
      const auto ref = read_file(ref_file);
      const auto p = load_profile(profile_file);
      const auto kinds = parse_scenarios(scenario_list);
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < seed_count; ++i) seeds.push_back(first_seed + i);
      sim::SimOptions options;
      options.speedup = speedup;
      // a fixed transcript if given, else each seed corrupts the reference anew;
      // scenarios of one seed always share their input
      const auto input = transcript_file.empty() ? sim::seeded_input(ref, target)
                                                 : std::function<Transcript(std::uint64_t)>(
                                                       [t = load_transcript(transcript_file)](std::uint64_t) { return t; });
      const auto rows = sim::sweep(kinds, seeds, {p, p, p}, input, ref, options);
      const auto csv = sim::sweep_csv(rows);
      if (csv_file.empty()) std::cout << csv;
      else write_text(csv_file, csv);
      for (const auto& s : sim::summarize(rows)) {
        std::cerr << "scenario " << to_string(s.scenario) << ": mean reduction " << s.reduction.mean << ", 95% CI ["
                  << s.reduction.low << ", " << s.reduction.high << "], conflicts " << s.conflicts << '\n';
      }
    } else if (*seed_cmd) {
      const auto ref = read_file(ref_file);
      const auto hyp = sim::seed_errors(ref, target, seed);
      std::cout << hyp << '\n';
      if (!timed_file.empty()) {
        write_text(timed_file, to_json(sim::synthetic_timing(hyp, sim::speech_duration_s(words_from_text(ref).size()))).dump() + "\n");
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
