// resiren: synthetic climatology generation, ReSIREN pretraining, embedding
// export, probing, and analysis in one binary. Every command writes its
// artifacts plus a manifest.json into --out.

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "resiren/cli.hpp"
#include "resiren/version.hpp"

namespace {

void add_config_flag(CLI::App* cmd) {
    cmd->set_config("--config", "", "Read defaults from an INI/TOML file (flags override)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ReSIREN spatio-temporal location encoder harness"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(resiren::kVersion));

    int rc = 0;

    resiren::cli::GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic climatology grid");
    add_config_flag(gen_cmd);
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "Master seed");
    gen_cmd->add_option("--width", gen.width, "Grid width (pixels)");
    gen_cmd->add_option("--height", gen.height, "Grid height (pixels)");
    gen_cmd->add_option("--vars", gen.vars, "Number of climate variables");
    gen_cmd->callback([&] { rc = resiren::cli::cmd_gen(gen); });

    resiren::cli::PretrainArgs pre;
    auto* pre_cmd = app.add_subcommand("pretrain", "Pretrain a ReSIREN on a climatology grid");
    add_config_flag(pre_cmd);
    pre_cmd->add_option("--grid", pre.grid, "Input grid (.cgrd)")->required();
    pre_cmd->add_option("--out", pre.out, "Output directory")->required();
    pre_cmd->add_option("--seed", pre.seed, "Master seed");
    pre_cmd->add_option("--depth", pre.depth, "Number of backbone layers");
    pre_cmd->add_option("--hidden", pre.hidden, "Hidden width");
    pre_cmd->add_option("--embedding", pre.embedding, "Embedding width");
    pre_cmd->add_option("--omega0", pre.omega0, "Sine frequency scale");
    pre_cmd->add_option("--residual", pre.residual, "Residual mode: off|half|sqrt2");
    pre_cmd->add_option("--first-layer", pre.first_layer, "First-layer activation: hsiren|sine");
    pre_cmd->add_flag("--march-only", pre.march_only, "Train on month 3 only");
    pre_cmd->add_flag("--concat-months", pre.concat_months,
                      "Location-only input, all 12 months as targets");
    pre_cmd->add_option("--epochs", pre.epochs, "Maximum epochs");
    pre_cmd->add_option("--batch", pre.batch, "Batch size");
    pre_cmd->add_option("--lr", pre.lr, "Adam learning rate");
    pre_cmd->add_option("--patience", pre.patience, "Early-stop patience (epochs)");
    pre_cmd->add_option("--min-delta", pre.min_delta, "Early-stop improvement threshold");
    pre_cmd->callback([&] { rc = resiren::cli::cmd_pretrain(pre); });

    resiren::cli::EmbedArgs emb;
    auto* emb_cmd = app.add_subcommand("embed", "Export embeddings for a points CSV");
    add_config_flag(emb_cmd);
    emb_cmd->add_option("--checkpoint", emb.checkpoint, "Checkpoint (.rsrn)")->required();
    emb_cmd->add_option("--points", emb.points, "Points CSV (lon_deg,lat_deg,month)")->required();
    emb_cmd->add_option("--out", emb.out, "Output directory")->required();
    emb_cmd->add_option("--months", emb.months, "Month policy: obs|seasonal|rec");
    emb_cmd->callback([&] { rc = resiren::cli::cmd_embed(emb); });

    resiren::cli::ProbeArgs probe;
    auto* probe_cmd = app.add_subcommand("probe", "Build a task and run the probing suite");
    add_config_flag(probe_cmd);
    probe_cmd->add_option("--grid", probe.grid, "Input grid (.cgrd)")->required();
    probe_cmd->add_option("--out", probe.out, "Output directory")->required();
    probe_cmd->add_option("--checkpoint", probe.checkpoint, "Checkpoint (.rsrn); required unless --baseline");
    probe_cmd->add_option("--task", probe.task, "Task: biomes|sdm|traits");
    probe_cmd->add_option("--seed", probe.seed, "Master seed");
    probe_cmd->add_option("--months", probe.months, "Month policy override: obs|seasonal|rec");
    probe_cmd->add_option("--probe", probe.probe, "Probe head: linear|mlp");
    probe_cmd->add_option("--baseline", probe.baseline, "From-scratch baseline: fs-loc|fs-ch|fs-loc-ch");
    probe_cmd->add_option("--n-inits", probe.n_inits, "Probe initializations");
    probe_cmd->add_option("--points", probe.points, "Task points (biomes/traits)");
    probe_cmd->add_option("--classes", probe.classes, "Biome classes");
    probe_cmd->add_option("--species", probe.species, "SDM species");
    probe_cmd->add_option("--occurrences", probe.occurrences, "SDM occurrence records");
    probe_cmd->add_option("--targets", probe.targets, "Trait regression targets");
    probe_cmd->callback([&] { rc = resiren::cli::cmd_probe(probe); });

    resiren::cli::AnalyzeArgs ana;
    auto* ana_cmd = app.add_subcommand("analyze", "Reconstruction error report and prediction grid");
    add_config_flag(ana_cmd);
    ana_cmd->add_option("--checkpoint", ana.checkpoint, "Checkpoint (.rsrn)")->required();
    ana_cmd->add_option("--grid", ana.grid, "Input grid (.cgrd)")->required();
    ana_cmd->add_option("--out", ana.out, "Output directory")->required();
    ana_cmd->add_option("--seed", ana.seed, "Master seed");
    ana_cmd->add_option("--locations", ana.locations, "Sampled land locations");
    ana_cmd->add_option("--cell-rows", ana.cell_rows, "Spatial MAE cell rows");
    ana_cmd->add_option("--cell-cols", ana.cell_cols, "Spatial MAE cell columns");
    ana_cmd->add_option("--pred-var", ana.pred_var, "Variable index for the prediction grid");
    ana_cmd->add_option("--pred-month", ana.pred_month, "Month for the prediction grid");
    ana_cmd->add_option("--pred-lon", ana.pred_lon, "Prediction grid columns");
    ana_cmd->add_option("--pred-lat", ana.pred_lat, "Prediction grid rows");
    ana_cmd->callback([&] { rc = resiren::cli::cmd_analyze(ana); });

    resiren::cli::ScaleArgs scale;
    auto* scale_cmd = app.add_subcommand("scale", "Depth sweep (SIREN vs ReSIREN) or ablation table");
    add_config_flag(scale_cmd);
    scale_cmd->add_option("--grid", scale.grid, "Input grid (.cgrd)")->required();
    scale_cmd->add_option("--out", scale.out, "Output directory")->required();
    scale_cmd->add_option("--seed", scale.seed, "Master seed");
    scale_cmd->add_option("--depths", scale.depths, "Sweep depths")->delimiter(',');
    scale_cmd->add_option("--modes", scale.modes, "Residual modes: off|half|sqrt2")->delimiter(',');
    scale_cmd->add_option("--n-seeds", scale.n_seeds, "Seeds per sweep cell");
    scale_cmd->add_option("--depth", scale.depth, "Base depth for --ablations");
    scale_cmd->add_option("--hidden", scale.hidden, "Hidden width");
    scale_cmd->add_option("--embedding", scale.embedding, "Embedding width");
    scale_cmd->add_option("--epochs", scale.epochs, "Epochs per cell");
    scale_cmd->add_option("--batch", scale.batch, "Batch size");
    scale_cmd->add_option("--patience", scale.patience, "Early-stop patience");
    scale_cmd->add_option("--lr", scale.lr, "Adam learning rate");
    scale_cmd->add_flag("--ablations", scale.ablations, "Run the ablation table instead of the sweep");
    scale_cmd->add_option("--task", scale.task, "Probe task per sweep cell: biomes|sdm|traits");
    scale_cmd->add_option("--n-inits", scale.n_inits, "Probe initializations");
    scale_cmd->add_option("--points", scale.points, "Task points (biomes/traits)");
    scale_cmd->add_option("--classes", scale.classes, "Biome classes");
    scale_cmd->add_option("--species", scale.species, "SDM species");
    scale_cmd->add_option("--occurrences", scale.occurrences, "SDM occurrence records");
    scale_cmd->add_option("--targets", scale.targets, "Trait regression targets");
    scale_cmd->callback([&] { rc = resiren::cli::cmd_scale(scale); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const resiren::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return rc;
}
