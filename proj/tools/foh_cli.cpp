#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <foh/app.hpp>

namespace {

struct Command {
  const char* name;
  const char* help;
  void (*run)(const foh::RunConfig&);
};

void train(const foh::RunConfig& cfg) { foh::app::cmd_train(cfg, std::cout); }

const std::vector<Command> kCommands = {
    {"synth", "write a synthetic base/query dataset pair", foh::app::cmd_synth},
    {"ingest", "convert CSV (or FOHD) input to the binary container", foh::app::cmd_ingest},
    {"train", "learn the hash model over the stream and build the query pool", train},
    {"query", "answer queries in pool or full mode", foh::app::cmd_query},
    {"eval", "score queries and write metrics.json and pr.csv", foh::app::cmd_eval},
    {"bench", "time pool-mode against full re-encoding", foh::app::cmd_bench},
    {"ablate", "train and score the foh, foh-q, foh-l, foh-s variants", foh::app::cmd_ablate},
    {"sweep-refresh", "score refresh cadences 1 to 5", foh::app::cmd_sweep_refresh},
};

std::string error_json(const std::string& command, const std::string& message) {
  return nlohmann::ordered_json{{"error", message}, {"command", command}}.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming learned hashing with a query pool"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  std::map<CLI::App*, std::map<std::string, CLI::Option*>> opts;

  for (const auto& cmd : kCommands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "key=value config file");
    for (const auto& key : foh::config_keys()) {
      std::string names = std::string("--") + key.name;
      std::string dashed = key.name;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key.name) names += ",--" + dashed;
      std::string help = std::string(key.help) + " [" + key.fallback + "]";
      if (key.is_switch)
        opts[sub][key.name] = sub->add_flag(names, switches[key.name], help);
      else
        opts[sub][key.name] = sub->add_option(names, values[key.name], help);
    }
    subs.emplace_back(sub, &cmd);
  }

  std::string command = "foh";
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << error_json(command, e.what()) << '\n';
    return e.get_exit_code();
  }

  try {
    for (const auto& [sub, cmd] : subs) {
      if (!sub->parsed()) continue;
      command = cmd->name;
      std::vector<std::pair<std::string, std::string>> flags;
      for (const auto& key : foh::config_keys()) {
        if (opts[sub][key.name]->count() == 0) continue;
        flags.emplace_back(key.name, key.is_switch ? "true" : values[key.name]);
      }
      cmd->run(foh::parse_config(config_path, flags));
    }
  } catch (const std::exception& e) {
    std::cerr << error_json(command, e.what()) << '\n';
    return 1;
  }
  return 0;
}
