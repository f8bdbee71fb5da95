#include <string>

#include "CLI11.hpp"
#include "fatlab/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fatlab: fast adversarial training laboratory"};
    app.require_subcommand(1);

    std::string config, checkpoint;

    CLI::App* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config, "experiment config file")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--config", config, "experiment config file")->required();
    eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();

    CLI::App* landscape = app.add_subcommand("landscape", "loss surface grid around samples");
    landscape->add_option("--config", config, "experiment config file")->required();
    landscape->add_option("--checkpoint", checkpoint, "checkpoint to probe")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "robust accuracy vs attack strength");
    sweep->add_option("--config", config, "experiment config file")->required();
    sweep->add_option("--checkpoint", checkpoint, "checkpoint to attack")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (train->parsed()) return fatlab::run_train(config);
    if (eval->parsed()) return fatlab::run_eval(config, checkpoint);
    if (landscape->parsed()) return fatlab::run_landscape(config, checkpoint);
    return fatlab::run_sweep(config, checkpoint);
}
