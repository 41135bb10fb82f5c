#include "ka/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ka/adaptation.hpp"
#include "ka/errors.hpp"
#include "ka/random.hpp"

namespace ka {
namespace {

// Cumulative Zipf(1) weights over `size` ranks.
std::vector<double> zipf_cdf(std::size_t size) {
  std::vector<double> cdf(size);
  double total = 0.0;
  for (std::size_t r = 0; r < size; ++r) {
    total += 1.0 / static_cast<double>(r + 1);
    cdf[r] = total;
  }
  for (double& c : cdf) c /= total;
  return cdf;
}

std::size_t sample_rank(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t count, std::size_t start = 0) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(prefix + std::to_string(start + i));
  return out;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool have_domain = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    Document doc;
    const auto text = obj.find("text");
    if (text == obj.end() || !text->is_string()) throw ParseError(line_no, "`text` must be a string");
    doc.text = text->get<std::string>();
    if (const auto label = obj.find("label"); label != obj.end() && !label->is_null()) {
      if (!label->is_number_integer() || (label->get<long long>() != 0 && label->get<long long>() != 1)) {
        throw ParseError(line_no, "`label` must be 0, 1 or null, got " + label->dump());
      }
      doc.label = label->get<int>();
    }
    if (const auto domain = obj.find("domain"); domain != obj.end() && !domain->is_null()) {
      if (!domain->is_string()) throw ParseError(line_no, "`domain` must be a string");
      const auto name = domain->get<std::string>();
      if (!have_domain) {
        corpus.domain_id = name;
        have_domain = true;
      } else if (name != corpus.domain_id) {
        throw ParseError(line_no, "domain '" + name + "' differs from '" + corpus.domain_id + "'");
      }
    }
    corpus.docs.push_back(std::move(doc));
  }
  if (in.bad()) throw IoError("failed reading " + path.string());
  if (corpus.empty()) throw EmptyCorpus("corpus " + path.string() + " contains no documents");
  if (!have_domain) corpus.domain_id = path.stem().string();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const Document& doc : corpus.docs) {
    nlohmann::ordered_json obj;
    obj["text"] = doc.text;
    obj["label"] = doc.label ? nlohmann::ordered_json(*doc.label) : nlohmann::ordered_json(nullptr);
    obj["domain"] = corpus.domain_id;
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw InvalidArgument("split fractions must be >= 0");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");
}

CorpusSplit split(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  // Strata: label 0, label 1, unlabeled. Each stratum is shuffled, then all
  // documents are ordered by their relative position inside their stratum,
  // so any contiguous cut preserves the label ratio up to rounding.
  std::array<std::vector<std::size_t>, 3> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& label = corpus.docs[i].label;
    strata[label ? static_cast<std::size_t>(*label) : 2].push_back(i);
  }
  Rng rng(spec.seed);
  struct Slot {
    double position;
    std::size_t stratum;
    std::size_t doc;
  };
  std::vector<Slot> slots;
  slots.reserve(corpus.size());
  for (std::size_t s = 0; s < strata.size(); ++s) {
    rng.shuffle(std::span<std::size_t>(strata[s]));
    const double size = static_cast<double>(strata[s].size());
    for (std::size_t k = 0; k < strata[s].size(); ++k) {
      slots.push_back({(static_cast<double>(k) + 0.5) / size, s, strata[s][k]});
    }
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    if (a.position != b.position) return a.position < b.position;
    return a.stratum < b.stratum;
  });

  const double n = static_cast<double>(corpus.size());
  const auto cut1 = static_cast<std::size_t>(std::llround(spec.fractions[0] * n));
  const auto cut2 = std::min(corpus.size(), static_cast<std::size_t>(
                                                std::llround((spec.fractions[0] + spec.fractions[1]) * n)));
  CorpusSplit out;
  Corpus* parts[3] = {&out.train, &out.dev, &out.test};
  for (Corpus* part : parts) part->domain_id = corpus.domain_id;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Corpus* part = i < cut1 ? parts[0] : i < cut2 ? parts[1] : parts[2];
    part->docs.push_back(corpus.docs[slots[i].doc]);
  }
  const char* names[3] = {"train", "dev", "test"};
  for (std::size_t p = 0; p < 3; ++p) {
    if (spec.fractions[p] > 0.0 && parts[p]->empty()) {
      throw InvalidArgument(std::string("split: fraction for ") + names[p] + " yields an empty part");
    }
  }
  return out;
}

void SynthSpec::validate() const {
  if (n_domains < 1) throw InvalidArgument("SynthSpec: n_domains must be >= 1");
  if (vocab_size < 4) throw InvalidArgument("SynthSpec: vocab_size must be >= 4");
  if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0)) {
    throw InvalidArgument("SynthSpec: shared_fraction must be in [0,1]");
  }
  if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw InvalidArgument("SynthSpec: noise_rate must be in [0,0.5)");
  if (docs_per_domain < 1) throw InvalidArgument("SynthSpec: docs_per_domain must be >= 1");
  if (doc_length_min < 1 || doc_length_max < doc_length_min) {
    throw InvalidArgument("SynthSpec: need 1 <= doc_length_min <= doc_length_max");
  }
  if (!(sentiment_rate > 0.0 && sentiment_rate <= 1.0)) {
    throw InvalidArgument("SynthSpec: sentiment_rate must be in (0,1]");
  }
}

std::vector<Corpus> synth_domains(const SynthSpec& spec) {
  spec.validate();
  const std::size_t lexicon = spec.vocab_size / 4;
  const auto shared = static_cast<std::size_t>(std::llround(spec.shared_fraction * static_cast<double>(lexicon)));
  const std::size_t topic = spec.vocab_size - 2 * lexicon;
  const std::size_t common = std::max<std::size_t>(1, spec.vocab_size / 2);

  const auto shared_pos = numbered("pos", shared);
  const auto shared_neg = numbered("neg", shared);
  const auto common_words = numbered("w", common);
  const auto lexicon_cdf = zipf_cdf(lexicon);
  const auto topic_cdf = zipf_cdf(topic);
  const auto common_cdf = zipf_cdf(common);

  std::vector<Corpus> domains;
  domains.reserve(spec.n_domains);
  for (std::size_t d = 0; d < spec.n_domains; ++d) {
    Rng rng(derive_seed(spec.seed, d));
    const std::string tag = "d" + std::to_string(d);

    // Shared terms land at random frequency ranks inside each domain.
    std::array<std::vector<std::string>, 2> lex;
    lex[1] = shared_pos;
    lex[0] = shared_neg;
    for (auto& name : numbered(tag + "pos", lexicon - shared)) lex[1].push_back(std::move(name));
    for (auto& name : numbered(tag + "neg", lexicon - shared)) lex[0].push_back(std::move(name));
    rng.shuffle(std::span<std::string>(lex[0]));
    rng.shuffle(std::span<std::string>(lex[1]));
    const auto topic_words = numbered(tag + "t", topic);

    std::vector<int> labels(spec.docs_per_domain, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(spec.docs_per_domain / 2), 1);
    rng.shuffle(std::span<int>(labels));

    Corpus corpus;
    corpus.domain_id = "domain" + std::to_string(d);
    corpus.docs.reserve(spec.docs_per_domain);
    for (int label : labels) {
      const std::size_t length =
          spec.doc_length_min + rng.below(spec.doc_length_max - spec.doc_length_min + 1);
      // Every document carries at least one sentiment-bearing token.
      const std::size_t anchor = rng.below(length);
      std::string text;
      for (std::size_t t = 0; t < length; ++t) {
        const std::string* word;
        if (t == anchor || rng.bernoulli(spec.sentiment_rate)) {
          word = &lex[static_cast<std::size_t>(label)][sample_rank(lexicon_cdf, rng)];
        } else if (rng.bernoulli(0.5)) {
          word = &common_words[sample_rank(common_cdf, rng)];
        } else {
          word = &topic_words[sample_rank(topic_cdf, rng)];
        }
        if (!text.empty()) text += ' ';
        text += *word;
      }
      const int observed = rng.bernoulli(spec.noise_rate) ? 1 - label : label;
      corpus.docs.push_back({std::move(text), observed});
    }
    domains.push_back(std::move(corpus));
  }
  return domains;
}

double evaluate_accuracy(const MlpModel& model, const FeatureMatrix& labeled) {
  return accuracy(model, labeled);
}

std::vector<CurvePoint> mcd_accuracy_curve(const MlpModel& teacher, const FeatureMatrix& labeled_target,
                                           const std::vector<std::size_t>& ns) {
  if (!labeled_target.labels) throw InvalidArgument("mcd_accuracy_curve: target must be labeled");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 1) throw InvalidArgument("mcd_accuracy_curve: n must be >= 1");
    if (i > 0 && ns[i] < ns[i - 1]) throw InvalidArgument("mcd_accuracy_curve: ns must be ascending");
  }
  const Centroids centroids = compute_centroids(teacher, labeled_target);
  const auto scores = mcd_scores(teacher, centroids, labeled_target);
  const auto order = top_n_indices(scores, scores.size());
  std::vector<CurvePoint> out;
  out.reserve(ns.size());
  for (std::size_t n : ns) {
    const std::size_t take = std::min(n, order.size());
    std::size_t correct = 0;
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t i = order[k];
      if (static_cast<int>(predict(teacher, labeled_target.rows[i])) == (*labeled_target.labels)[i]) ++correct;
    }
    out.push_back({take, static_cast<double>(correct) / static_cast<double>(take)});
  }
  return out;
}

Correlation mcd_correlation_report(const MlpModel& teacher, const FeatureMatrix& labeled_target) {
  if (!labeled_target.labels) throw InvalidArgument("mcd_correlation_report: target must be labeled");
  const Centroids centroids = compute_centroids(teacher, labeled_target);
  const auto scores = mcd_scores(teacher, centroids, labeled_target);
  std::vector<double> correct(labeled_target.size());
  for (std::size_t i = 0; i < labeled_target.size(); ++i) {
    correct[i] = static_cast<int>(predict(teacher, labeled_target.rows[i])) == (*labeled_target.labels)[i] ? 1.0 : 0.0;
  }
  return pearson(scores, correct);
}

void pca_export(const MlpModel& teacher, const FeatureMatrix& target, const std::filesystem::path& path) {
  if (target.size() == 0) throw InvalidArgument("pca_export: no examples");
  const Centroids centroids = compute_centroids(teacher, target);
  const auto scores = mcd_scores(teacher, centroids, target);
  DenseMatrix hidden(target.size(), teacher.dims().hidden);
  std::vector<std::size_t> predictions(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const ForwardPass fp = forward(teacher, target.rows[i]);
    std::copy(fp.hidden.begin(), fp.hidden.end(), hidden.row(i).begin());
    predictions[i] = argmax(fp.logits);
  }
  const std::size_t k = std::min<std::size_t>(2, std::min(hidden.rows(), hidden.cols()));
  const DenseMatrix proj = pca_project(hidden, k);

  std::vector<std::string> header{"pc1", "pc2", "mcd_score", "teacher_prediction"};
  if (target.labels) header.emplace_back("label");
  std::vector<std::vector<std::string>> rows;
  rows.reserve(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    std::vector<std::string> row{format_number(proj(i, 0)), format_number(k > 1 ? proj(i, 1) : 0.0),
                                 format_number(scores[i]), std::to_string(predictions[i])};
    if (target.labels) row.push_back(std::to_string((*target.labels)[i]));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_number(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out << ',';
      out << csv_field(fields[i]);
    }
    out << "\r\n";
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace ka
