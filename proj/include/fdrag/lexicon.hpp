#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "fdrag/error.hpp"
#include "fdrag/text.hpp"

#ifndef FDRAG_DATA_DIR
#define FDRAG_DATA_DIR "data"
#endif

namespace fdrag {

/// Word lists that drive the rule-based segmenter and fact typer.
/// Every list is a plain UTF-8 file with one entry per line; lines starting
/// with '#' are comments.
struct Lexicon {
    std::set<std::string> abbreviations;  // lowercased, with trailing period
    std::set<std::string> stopwords;
    std::set<std::string> org_suffixes;
    std::set<std::string> honorifics;
    std::set<std::string> person_suffixes;
    std::set<std::string> given_names;
    std::set<std::string> months;
    std::set<std::string> gazetteer;

    static std::set<std::string> read_list(const std::filesystem::path& file, bool normalize_entries = true) {
        std::ifstream in(file);
        if (!in) throw InputError("cannot open lexicon file " + file.string());
        std::set<std::string> out;
        std::string line;
        while (std::getline(in, line)) {
            std::string t = text::trim(line);
            if (t.empty() || t.front() == '#') continue;
            out.insert(normalize_entries ? text::normalize(t) : text::nfc_lower(t));
        }
        return out;
    }

    static Lexicon load(const std::filesystem::path& dir) {
        Lexicon lx;
        lx.abbreviations = read_list(dir / "abbreviations.txt", false);
        lx.stopwords = read_list(dir / "stopwords.txt");
        lx.org_suffixes = read_list(dir / "org_suffixes.txt");
        lx.honorifics = read_list(dir / "honorifics.txt");
        lx.person_suffixes = read_list(dir / "person_suffixes.txt");
        lx.given_names = read_list(dir / "given_names.txt");
        lx.months = read_list(dir / "months.txt");
        lx.gazetteer = read_list(dir / "gazetteer.txt");
        return lx;
    }

    /// Swaps in a deployment-specific gazetteer.
    void load_gazetteer(const std::filesystem::path& file) { gazetteer = read_list(file); }

    /// Lists shipped in the data directory the library was configured with.
    static const Lexicon& builtin() {
        static const Lexicon lx = load(FDRAG_DATA_DIR);
        return lx;
    }
};

} // namespace fdrag
