#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "titlerec/error.hpp"
#include "titlerec/io.hpp"
#include "titlerec/pipeline.hpp"

namespace {

// Option names double as config-file keys.
void add_pipeline_options(CLI::App& app, titlerec::PipelineConfig& c, std::string& text_columns,
                          std::string& pooling) {
  app.add_option("--workdir", c.workdir, "Directory holding all stage artifacts")->capture_default_str();
  app.add_option("--seed", c.seed, "Master seed for every random stream")->capture_default_str();
  app.add_option("--articles", c.articles, "articles.csv path")->capture_default_str();
  app.add_option("--transactions", c.transactions, "transactions_train.csv path")->capture_default_str();
  app.add_option("--customers", c.customers, "Optional customers.csv adding ids to the customer universe");
  app.add_option("--text_columns", text_columns, "Comma-separated article columns merged into the text")
      ->capture_default_str();
  app.add_option("--holdout_days", c.holdout_days, "Final days of transactions held out as truth")
      ->capture_default_str();
  app.add_option("--min_freq", c.min_freq, "Minimum token frequency")->capture_default_str();
  app.add_option("--max_vocab_size", c.max_vocab_size, "Vocabulary cap including specials")
      ->capture_default_str();
  app.add_option("--max_len", c.encoder.max_len, "Sequence length")->capture_default_str();
  app.add_option("--d_model", c.encoder.d_model, "Hidden width")->capture_default_str();
  app.add_option("--n_heads", c.encoder.n_heads, "Attention heads")->capture_default_str();
  app.add_option("--n_layers", c.encoder.n_layers, "Encoder layers")->capture_default_str();
  app.add_option("--d_ff", c.encoder.d_ff, "Feed-forward width")->capture_default_str();
  app.add_option("--dropout", c.encoder.dropout_rate, "Dropout rate, 0 disables")->capture_default_str();
  app.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  app.add_option("--batch_size", c.batch_size, "Titles and pairs per step")->capture_default_str();
  app.add_option("--max_steps", c.max_steps, "Cap on total steps, 0 for none")->capture_default_str();
  app.add_option("--negatives_per_positive", c.negatives_per_positive, "Negatives per positive pair")
      ->capture_default_str();
  app.add_option("--learning_rate", c.learning_rate, "Adam learning rate")->capture_default_str();
  app.add_option("--mlm_weight", c.mlm_weight, "Weight of the masked-token loss")->capture_default_str();
  app.add_option("--np_weight", c.np_weight, "Weight of the next-purchase loss")->capture_default_str();
  app.add_option("--pooling", pooling, "Article pooling: mean or cls")
      ->check(CLI::IsMember({"mean", "cls"}))
      ->capture_default_str();
  app.add_option("--stats_bucket_width", c.stats_bucket_width, "Token-count bucket width for stats")
      ->capture_default_str();
}

std::vector<std::string> split_columns(const std::string& text) {
  std::vector<std::string> out;
  for (auto part : titlerec::split(text, ',')) {
    std::string s(part);
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(s.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"titlerec: title-embedding recommender pipeline"};
  app.set_config("--config", "", "key=value config file; command-line flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  titlerec::PipelineConfig config;
  std::string text_columns = "prod_name,product_type_name,index_name,detail_desc";
  std::string pooling = "mean";
  add_pipeline_options(app, config, text_columns, pooling);

  auto* ingest = app.add_subcommand("ingest", "Load CSVs, prepare text, split, group sessions");
  auto* stats = app.add_subcommand("stats", "Text-length and missing-description histograms");
  auto* train = app.add_subcommand("train", "Build the vocabulary and train the encoder");
  auto* recommend = app.add_subcommand("recommend", "Index articles and write submission.csv");
  auto* evaluate = app.add_subcommand("evaluate", "Score submission.csv against the held-out truth");
  auto* report = app.add_subcommand("report", "Purchase history next to recommendations for one customer");
  std::string customer;
  report->add_option("--customer", customer, "Customer id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[InvalidArgument]: " << e.what() << "\n";
    return 2;
  }

  try {
    config.text_columns = split_columns(text_columns);
    config.pooling = pooling == "cls" ? titlerec::Pooling::Cls : titlerec::Pooling::Mean;
    std::string out;
    if (*ingest) out = titlerec::run_ingest(config);
    else if (*stats) out = titlerec::run_stats(config);
    else if (*train) out = titlerec::run_train(config);
    else if (*recommend) out = titlerec::run_recommend(config);
    else if (*evaluate) out = titlerec::run_evaluate(config);
    else if (*report) out = titlerec::run_report(config, customer);
    std::cout << out;
  } catch (const titlerec::Error& e) {
    std::cerr << "error[" << titlerec::to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[IoError]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
