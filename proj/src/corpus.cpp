#include "notescore/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "notescore/errors.hpp"
#include "notescore/tokenizer.hpp"

namespace notescore {

namespace fs = std::filesystem;

std::size_t char_length(const std::string& text) { return decode_utf8(text).size(); }

std::unordered_map<NoteId, std::size_t> NoteCorpus::note_index() const {
  std::unordered_map<NoteId, std::size_t> idx;
  for (std::size_t i = 0; i < notes.size(); ++i) idx.emplace(notes[i].note_id, i);
  return idx;
}

std::unordered_map<FeatureId, std::size_t> NoteCorpus::feature_index() const {
  std::unordered_map<FeatureId, std::size_t> idx;
  for (std::size_t i = 0; i < features.size(); ++i) idx.emplace(features[i].feature_id, i);
  return idx;
}

std::vector<NoteId> NoteCorpus::labeled_note_ids() const {
  std::set<NoteId> ids;
  for (const auto& a : annotations) ids.insert(a.note_id);
  return {ids.begin(), ids.end()};
}

std::vector<NoteId> NoteCorpus::unlabeled_note_ids() const {
  std::set<NoteId> labeled;
  for (const auto& a : annotations) labeled.insert(a.note_id);
  std::vector<NoteId> out;
  for (const auto& n : notes)
    if (!labeled.contains(n.note_id)) out.push_back(n.note_id);
  std::sort(out.begin(), out.end());
  return out;
}

void NoteCorpus::validate() const {
  std::unordered_map<NoteId, std::size_t> lengths;
  for (const auto& n : notes) {
    if (n.text.empty()) throw DataError("note " + std::to_string(n.note_id) + " has empty text");
    if (!lengths.emplace(n.note_id, char_length(n.text)).second) {
      throw IntegrityError("duplicate note_id " + std::to_string(n.note_id));
    }
  }
  std::set<FeatureId> feature_ids;
  for (const auto& f : features) {
    if (!feature_ids.insert(f.feature_id).second) {
      throw IntegrityError("duplicate feature_id " + std::to_string(f.feature_id));
    }
  }
  std::set<std::pair<NoteId, FeatureId>> pairs;
  for (const auto& a : annotations) {
    auto it = lengths.find(a.note_id);
    if (it == lengths.end()) throw IntegrityError("annotation refers to unknown note_id " + std::to_string(a.note_id));
    if (!feature_ids.contains(a.feature_id)) {
      throw IntegrityError("annotation refers to unknown feature_id " + std::to_string(a.feature_id));
    }
    if (!pairs.insert({a.note_id, a.feature_id}).second) {
      throw IntegrityError("duplicate annotation for note " + std::to_string(a.note_id) + " feature " +
                           std::to_string(a.feature_id));
    }
    if (a.gold.max_end() > it->second) {
      throw DataError("span out of bounds in note " + std::to_string(a.note_id) + ": end " +
                      std::to_string(a.gold.max_end()) + " > length " + std::to_string(it->second));
    }
  }
}

CorpusPaths CorpusPaths::in_directory(const fs::path& dir) {
  return {dir / "notes.tsv", dir / "features.tsv", dir / "annotations.tsv"};
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

struct Location {
  std::string file;
  std::size_t line;
  std::string where() const { return file + ":" + std::to_string(line); }
};

std::string unescape(std::string_view s, const Location& loc) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 >= s.size()) throw ParseError(loc.where() + ": dangling escape");
    switch (s[++i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: throw ParseError(loc.where() + ": unknown escape '\\" + std::string(1, s[i]) + "'");
    }
  }
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::int64_t parse_int(std::string_view s, const Location& loc, std::string_view field) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(loc.where() + ": bad " + std::string(field) + " '" + std::string(s) + "'");
  }
  return v;
}

// Calls row(fields, location) for every data line of a 3-column TSV file.
template <class RowFn>
void read_table(const fs::path& path, const std::vector<std::string_view>& header, RowFn row) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Location loc{path.string(), lineno};
    if (!saw_header) {
      const auto fields = split_tabs(line);
      if (fields != header) throw ParseError(loc.where() + ": unexpected header line");
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != header.size()) {
      throw ParseError(loc.where() + ": expected " + std::to_string(header.size()) + " columns, found " +
                       std::to_string(fields.size()));
    }
    row(fields, loc);
  }
  if (!saw_header) throw ParseError(path.string() + ": missing header line");
}

const std::vector<std::string_view> kNotesHeader{"note_id", "case_id", "text"};
const std::vector<std::string_view> kFeaturesHeader{"feature_id", "case_id", "feature_text"};
const std::vector<std::string_view> kAnnotationsHeader{"note_id", "feature_id", "location"};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<AnnotatedExample> load_annotations(const fs::path& path, Provenance provenance) {
  std::vector<AnnotatedExample> out;
  read_table(path, kAnnotationsHeader, [&](const auto& f, const Location& loc) {
    AnnotatedExample a;
    a.note_id = parse_int(f[0], loc, "note_id");
    a.feature_id = parse_int(f[1], loc, "feature_id");
    try {
      a.gold = parse_location(f[2]);
    } catch (const DataError& e) {
      throw ParseError(loc.where() + ": " + e.what());
    }
    a.provenance = provenance;
    out.push_back(std::move(a));
  });
  return out;
}

void save_annotations(const std::vector<AnnotatedExample>& annotations, const fs::path& path) {
  auto out = open_out(path);
  out << "note_id\tfeature_id\tlocation\n";
  for (const auto& a : annotations) out << a.note_id << '\t' << a.feature_id << '\t' << format_location(a.gold) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

NoteCorpus load_corpus(const CorpusPaths& paths) {
  NoteCorpus corpus;
  read_table(paths.notes, kNotesHeader, [&](const auto& f, const Location& loc) {
    corpus.notes.push_back({parse_int(f[0], loc, "note_id"), parse_int(f[1], loc, "case_id"), unescape(f[2], loc)});
  });
  read_table(paths.features, kFeaturesHeader, [&](const auto& f, const Location& loc) {
    corpus.features.push_back(
        {parse_int(f[0], loc, "feature_id"), parse_int(f[1], loc, "case_id"), unescape(f[2], loc)});
  });
  corpus.annotations = load_annotations(paths.annotations);
  for (auto& a : corpus.annotations) a.gold = a.gold.normalize();
  corpus.validate();
  return corpus;
}

void save_corpus(const NoteCorpus& corpus, const CorpusPaths& paths) {
  {
    auto out = open_out(paths.notes);
    out << "note_id\tcase_id\ttext\n";
    for (const auto& n : corpus.notes) out << n.note_id << '\t' << n.case_id << '\t' << escape(n.text) << '\n';
  }
  {
    auto out = open_out(paths.features);
    out << "feature_id\tcase_id\tfeature_text\n";
    for (const auto& f : corpus.features) out << f.feature_id << '\t' << f.case_id << '\t' << escape(f.feature_text) << '\n';
  }
  save_annotations(corpus.annotations, paths.annotations);
}

}  // namespace notescore
