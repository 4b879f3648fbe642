#include "attnaudit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "attnaudit/util.hpp"

namespace attnaudit {

using json = nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  append(std::string(kPadWord));
  append(std::string(kUnkWord));
  append(std::string(kNumberWord));
}

TokenIndex Vocabulary::append(const std::string& word) {
  auto [it, inserted] = index_.emplace(word, static_cast<TokenIndex>(words_.size()));
  if (!inserted) throw ValidationError("duplicate vocabulary word '" + word + "'");
  words_.push_back(word);
  return it->second;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  if (words.size() < 3 || words[0] != kPadWord || words[1] != kUnkWord ||
      words[2] != kNumberWord)
    throw ValidationError("vocabulary must start with <pad>, <unk>, qqq");
  Vocabulary v;
  for (std::size_t i = 3; i < words.size(); ++i) v.append(words[i]);
  return v;
}

std::optional<TokenIndex> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::word(TokenIndex index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= words_.size())
    throw std::out_of_range("token index " + std::to_string(index) +
                            " outside vocabulary");
  return words_[static_cast<std::size_t>(index)];
}

std::string Vocabulary::to_json() const { return json(words_).dump(); }

Vocabulary Vocabulary::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("vocabulary json: ") + e.what());
  }
  if (!j.is_array()) throw ValidationError("vocabulary json must be an array");
  std::vector<std::string> words;
  for (const auto& w : j) {
    if (!w.is_string()) throw ValidationError("vocabulary entries must be strings");
    words.push_back(w.get<std::string>());
  }
  return from_words(words);
}

std::string Vocabulary::hash() const {
  std::uint64_t h = fnv1a64("vocab");
  for (const auto& w : words_) {
    h = fnv1a64(w, h);
    h = fnv1a64(std::string_view("\0", 1), h);
  }
  return hex64(h);
}

// ---------------------------------------------------------------------------
// Tokenization

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur += c < 0x80 ? static_cast<char>(std::tolower(c)) : ch;
    }
  }
  flush();
  return out;
}

std::string normalize_word(std::string_view token) {
  const bool has_digit = std::any_of(token.begin(), token.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
  });
  return has_digit ? std::string(Vocabulary::kNumberWord) : std::string(token);
}

TokenIndex normalize_token(std::string_view token, const Vocabulary& vocab) {
  return vocab.find(normalize_word(token)).value_or(Vocabulary::kUnk);
}

Vocabulary build_vocab(std::span<const std::string> train_texts,
                       std::size_t min_count) {
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
  if (train_texts.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : train_texts)
    for (const auto& tok : tokenize(text)) ++counts[normalize_word(tok)];
  Vocabulary probe;
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts)
    if (c >= min_count && !probe.find(w)) kept.emplace_back(w, c);
  // std::map iteration is lexicographic, so a stable sort on count keeps
  // ties in lexicographic order.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words(probe.words());
  for (auto& [w, _] : kept) words.push_back(w);
  return Vocabulary::from_words(words);
}

std::vector<TokenIndex> encode(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenIndex> out;
  for (const auto& tok : tokenize(text)) out.push_back(normalize_token(tok, vocab));
  return out;
}

std::vector<std::string> decode(std::span<const TokenIndex> tokens,
                                const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (auto t : tokens) out.push_back(vocab.word(t));
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                const Vocabulary& vocab, std::size_t dim,
                                std::uint64_t seed) {
  if (dim == 0) throw ValidationError("embedding dimension must be positive");
  const std::size_t V = vocab.size();
  EmbeddingMatrix m{Tensor({V, dim}), std::vector<RowProvenance>(V, RowProvenance::gaussian_init)};

  if (!path.empty() && path != "none") {
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::istringstream fields(line);
      std::vector<std::string> parts;
      for (std::string f; fields >> f;) parts.push_back(f);
      if (parts.empty()) continue;
      if (line_no == 1 && parts.size() == 2 &&
          std::all_of(parts.begin(), parts.end(), [](const std::string& s) {
            return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
              return std::isdigit(static_cast<unsigned char>(c)) != 0;
            });
          }))
        continue;
      if (parts.size() != dim + 1)
        throw ValidationError("embedding file line " + std::to_string(line_no) +
                              ": expected word plus " + std::to_string(dim) +
                              " values, got " + std::to_string(parts.size()) + " fields");
      std::vector<double> vec(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        try {
          vec[i] = parse_double(parts[i + 1]);
        } catch (const ValidationError&) {
          throw ValidationError("embedding file line " + std::to_string(line_no) +
                                ": non-numeric value '" + parts[i + 1] + "'");
        }
        if (!std::isfinite(vec[i]))
          throw ValidationError("embedding file line " + std::to_string(line_no) +
                                ": non-finite value");
      }
      auto idx = vocab.find(parts[0]);
      if (!idx || *idx == Vocabulary::kPad) continue;
      const auto row = static_cast<std::size_t>(*idx);
      if (m.provenance[row] == RowProvenance::pretrained) continue;
      std::copy(vec.begin(), vec.end(), &m.values[row * dim]);
      m.provenance[row] = RowProvenance::pretrained;
    }
  }

  m.provenance[Vocabulary::kPad] = RowProvenance::padding;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t r = 0; r < V; ++r) {
    if (m.provenance[r] != RowProvenance::gaussian_init) continue;
    for (std::size_t c = 0; c < dim; ++c) m.values[r * dim + c] = gauss(rng);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Dataset

std::vector<const Document*> Dataset::split(Split s) const {
  std::vector<const Document*> out;
  for (const auto& d : documents)
    if (d.split == s) out.push_back(&d);
  return out;
}

void Dataset::validate() const {
  if (label_count == 0) throw ValidationError("label_count must be positive");
  const auto V = static_cast<TokenIndex>(vocabulary.size());
  for (const auto& d : documents) {
    if (d.tokens.empty()) throw ValidationError("document '" + d.id + "' has no tokens");
    for (auto t : d.tokens)
      if (t < 0 || t >= V)
        throw ValidationError("document '" + d.id + "' has out-of-vocabulary index");
    if (d.labels.size() != label_count)
      throw ValidationError("document '" + d.id + "' has wrong label count");
    for (int y : d.labels)
      if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
  }
  const auto train = split(Split::train);
  for (std::size_t l = 0; l < label_count; ++l) {
    bool pos = false, neg = false;
    for (const auto* d : train) (d->labels[l] ? pos : neg) = true;
    if (!pos || !neg)
      throw ValidationError("label " + std::to_string(l) +
                            " lacks a positive or negative training example");
  }
}

std::string Dataset::split_hash(Split s) const {
  std::uint64_t h = fnv1a64(split_name(s));
  for (const auto* d : split(s)) {
    h = fnv1a64(d->id, h);
    for (auto t : d->tokens)
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&t), sizeof t), h);
    for (int y : d->labels) h = fnv1a64(y ? "1" : "0", h);
  }
  return hex64(h);
}

namespace {

// Rank order -> 70/10/20 split.
void assign_splits(std::vector<Document>& docs, const std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto n_dev = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  for (std::size_t r = 0; r < n; ++r) {
    docs[order[r]].split = r < n_train ? Split::train
                           : r < n_train + n_dev ? Split::dev
                                                 : Split::test;
  }
}

std::string filler_word(std::size_t i) {
  // Digit-free names so a JSONL round trip does not collapse them to "qqq".
  std::string suffix;
  do {
    suffix.insert(suffix.begin(), static_cast<char>('a' + i % 26));
    i /= 26;
  } while (i > 0);
  return "w" + std::string(suffix.size() < 2 ? 2 - suffix.size() : 0, 'a') + suffix;
}

}  // namespace

Dataset generate_synthetic_corpus(const SyntheticCorpusParams& p) {
  Vocabulary reserved;
  const std::size_t n_trig = p.trigger_words.size();
  if (n_trig == 0) throw ValidationError("at least one trigger word is required");
  if (p.n_docs == 0) throw ValidationError("n_docs must be positive");
  if (p.doc_len == 0) throw ValidationError("doc_len must be >= 1");
  if (p.vocab_size <= n_trig + reserved.size())
    throw ValidationError("vocab_size must exceed trigger count plus reserved tokens");
  if (p.label_rule == LabelRule::per_trigger && p.doc_len < n_trig)
    throw ValidationError("doc_len must be >= number of triggers for per_trigger labels");

  std::vector<std::string> words(reserved.words());
  for (const auto& t : p.trigger_words) {
    const auto toks = tokenize(t);
    if (toks.size() != 1 || toks[0] != t || normalize_word(t) != t)
      throw ValidationError("trigger word '" + t + "' is not a single normalized token");
    words.push_back(t);
  }
  const std::size_t n_fill = p.vocab_size - reserved.size() - n_trig;
  std::vector<std::string> fillers;
  for (std::size_t i = 0; fillers.size() < n_fill; ++i) {
    auto w = filler_word(i);
    if (std::find(words.begin(), words.end(), w) != words.end()) continue;
    fillers.push_back(w);
  }
  words.insert(words.end(), fillers.begin(), fillers.end());

  Dataset ds;
  ds.vocabulary = Vocabulary::from_words(words);
  ds.label_count = p.label_rule == LabelRule::any_trigger ? 1 : n_trig;

  std::mt19937_64 rng(p.seed);
  std::vector<std::size_t> order(p.n_docs);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> positive(p.n_docs, false);
  for (std::size_t i = 0; i < p.n_docs / 2; ++i) positive[order[i]] = true;

  std::uniform_int_distribution<std::size_t> pick_filler(0, n_fill - 1);
  std::uniform_int_distribution<std::size_t> pick_pos(0, p.doc_len - 1);
  std::uniform_int_distribution<std::size_t> pick_trigger(0, n_trig - 1);
  std::bernoulli_distribution coin(0.5);

  const int id_width = static_cast<int>(std::to_string(p.n_docs).size());
  for (std::size_t i = 0; i < p.n_docs; ++i) {
    std::vector<std::string> toks(p.doc_len);
    for (auto& t : toks) t = fillers[pick_filler(rng)];
    Document d;
    std::string num = std::to_string(i);
    d.id = "syn-" + std::string(id_width - num.size(), '0') + num;
    if (p.label_rule == LabelRule::any_trigger) {
      d.labels = {positive[i] ? 1 : 0};
      if (positive[i]) toks[pick_pos(rng)] = p.trigger_words[pick_trigger(rng)];
    } else {
      d.labels.assign(n_trig, 0);
      std::vector<std::size_t> slots(p.doc_len);
      std::iota(slots.begin(), slots.end(), 0);
      std::shuffle(slots.begin(), slots.end(), rng);
      for (std::size_t l = 0; l < n_trig; ++l) {
        if (!coin(rng)) continue;
        d.labels[l] = 1;
        toks[slots[l]] = p.trigger_words[l];
      }
    }
    for (std::size_t t = 0; t < toks.size(); ++t) {
      if (t) d.text += ' ';
      d.text += toks[t];
    }
    d.tokens = encode(d.text, ds.vocabulary);
    ds.documents.push_back(std::move(d));
  }
  std::shuffle(order.begin(), order.end(), rng);
  assign_splits(ds.documents, order);
  return ds;
}

// ---------------------------------------------------------------------------
// JSONL

Dataset parse_jsonl(std::string_view contents, const JsonlOptions& options) {
  struct Raw {
    std::string id, text;
    std::vector<int> labels;
    std::optional<Split> split;
    std::size_t line;
  };
  std::vector<Raw> raws;
  std::optional<std::size_t> arity;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    const auto nl = contents.find('\n', pos);
    std::string_view line = contents.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? contents.size() + 1 : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw ValidationError(where + "expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "id" && it.key() != "text" && it.key() != "labels" && it.key() != "split")
        throw ValidationError(where + "unknown field '" + it.key() + "'");
    if (!j.contains("id") || !j["id"].is_string())
      throw ValidationError(where + "\"id\" must be a string");
    if (!j.contains("text") || !j["text"].is_string())
      throw ValidationError(where + "\"text\" must be a string");
    if (!j.contains("labels") || !j["labels"].is_array() || j["labels"].empty())
      throw ValidationError(where + "\"labels\" must be a non-empty array");
    Raw r;
    r.line = line_no;
    r.id = j["id"].get<std::string>();
    r.text = j["text"].get<std::string>();
    for (const auto& y : j["labels"]) {
      if (!y.is_number_integer() || (y.get<int>() != 0 && y.get<int>() != 1))
        throw ValidationError(where + "labels must be 0 or 1");
      r.labels.push_back(y.get<int>());
    }
    if (arity && *arity != r.labels.size())
      throw ValidationError(where + "label arity " + std::to_string(r.labels.size()) +
                            " differs from earlier lines (" + std::to_string(*arity) + ")");
    arity = r.labels.size();
    if (j.contains("split")) {
      if (!j["split"].is_string()) throw ValidationError(where + "\"split\" must be a string");
      try {
        r.split = parse_split(j["split"].get<std::string>());
      } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
      }
    }
    if (tokenize(r.text).empty()) throw ValidationError(where + "text has no tokens");
    raws.push_back(std::move(r));
  }
  if (raws.empty()) throw ValidationError("dataset file has no documents");

  Dataset ds;
  ds.label_count = *arity;
  ds.documents.resize(raws.size());
  std::vector<std::size_t> unsplit;
  for (std::size_t i = 0; i < raws.size(); ++i) {
    ds.documents[i].id = raws[i].id;
    ds.documents[i].text = raws[i].text;
    ds.documents[i].labels = raws[i].labels;
    if (raws[i].split)
      ds.documents[i].split = *raws[i].split;
    else
      unsplit.push_back(i);
  }
  if (!unsplit.empty()) {
    std::stable_sort(unsplit.begin(), unsplit.end(), [&](std::size_t a, std::size_t b) {
      const auto ha = fnv1a64(raws[a].id), hb = fnv1a64(raws[b].id);
      return ha != hb ? ha < hb : raws[a].id < raws[b].id;
    });
    assign_splits(ds.documents, unsplit);
  }

  if (options.vocabulary) {
    ds.vocabulary = *options.vocabulary;
  } else {
    std::vector<std::string> train_texts;
    for (const auto& d : ds.documents)
      if (d.split == Split::train) train_texts.push_back(d.text);
    ds.vocabulary = build_vocab(train_texts, options.min_count);
  }
  for (auto& d : ds.documents) d.tokens = encode(d.text, ds.vocabulary);
  return ds;
}

Dataset load_jsonl(const std::filesystem::path& path, const JsonlOptions& options) {
  return parse_jsonl(read_file(path), options);
}

std::string to_jsonl(const Dataset& dataset) {
  std::string out;
  for (const auto& d : dataset.documents) {
    json j;
    j["id"] = d.id;
    j["text"] = d.text;
    j["labels"] = d.labels;
    j["split"] = std::string(split_name(d.split));
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace attnaudit
