// Copyright 2026 The apicomplete Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small generated corpora for smoke tests, overfitting checks and the
// experiment harness. All generators are deterministic in their seed.

#pragma once

#include "apicomplete/corpus.hpp"
#include "apicomplete/rng.hpp"

#include <json.hpp>

#include <ostream>
#include <string>
#include <vector>

namespace apicomplete::synthetic {

struct ApiEntry {
  const char* api;
  const char* task;         // verb phrase describing what the api does
  const char* alternative;  // another api that also answers the task, or ""
};

inline const std::vector<ApiEntry>& api_inventory() {
  static const std::vector<ApiEntry> entries = {
      {"java.util.arraylist.add", "add an element to a list", "java.util.linkedlist.add"},
      {"java.util.arraylist.remove", "remove an element from a list", ""},
      {"java.util.arraylist.size", "get the number of elements in a list", ""},
      {"java.util.arraylist.contains", "check if a list contains a value", ""},
      {"java.util.linkedlist.addfirst", "insert an item at the head of a linked list", ""},
      {"java.util.linkedlist.poll", "take the first item off a queue", "java.util.arraydeque.poll"},
      {"java.util.hashmap.put", "store a key value pair in a map", ""},
      {"java.util.hashmap.get", "look up a value by key in a map", ""},
      {"java.util.hashmap.containskey", "check whether a map has a key", ""},
      {"java.util.hashmap.keyset", "iterate over the keys of a map", ""},
      {"java.util.hashset.add", "add an item to a set", ""},
      {"java.util.collections.sort", "sort a list of items", "java.util.list.sort"},
      {"java.util.collections.shuffle", "shuffle a list randomly", ""},
      {"java.util.collections.reverse", "reverse the order of a list", ""},
      {"java.util.arrays.sort", "sort an array", ""},
      {"java.util.arrays.aslist", "convert an array to a list", ""},
      {"java.util.arrays.fill", "fill an array with a value", ""},
      {"java.util.arrays.copyof", "copy an array into a new array", "java.lang.system.arraycopy"},
      {"java.lang.system.arraycopy", "copy elements between arrays", ""},
      {"java.lang.system.currenttimemillis", "get the current time in milliseconds", ""},
      {"java.lang.system.getenv", "read an environment variable", ""},
      {"java.lang.system.exit", "terminate the program", ""},
      {"java.lang.string.split", "split a string by a delimiter", ""},
      {"java.lang.string.substring", "extract part of a string", ""},
      {"java.lang.string.trim", "strip whitespace from a string", ""},
      {"java.lang.string.tolowercase", "convert a string to lower case", ""},
      {"java.lang.string.replace", "replace characters in a string", ""},
      {"java.lang.string.format", "format a string with arguments", ""},
      {"java.lang.integer.parseint", "convert a string to an integer", "java.lang.integer.valueof"},
      {"java.lang.integer.tostring", "convert an integer to a string", ""},
      {"java.lang.math.max", "find the larger of two numbers", ""},
      {"java.lang.math.sqrt", "compute the square root of a number", ""},
      {"java.lang.math.random", "generate a random double", "java.util.random.nextdouble"},
      {"java.lang.thread.sleep", "pause the current thread", ""},
      {"java.lang.thread.start", "start a new thread", ""},
      {"java.lang.stringbuilder.append", "append text to a string builder", ""},
      {"java.lang.stringbuilder.reverse", "reverse a string", ""},
      {"java.io.filereader.read", "read characters from a file", ""},
      {"java.io.bufferedreader.readline", "read a file line by line", "java.nio.file.files.readalllines"},
      {"java.io.filewriter.write", "write text to a file", ""},
      {"java.io.file.exists", "check if a file exists", "java.nio.file.files.exists"},
      {"java.io.file.delete", "delete a file", ""},
      {"java.io.file.mkdirs", "create a directory and its parents", ""},
      {"java.io.file.listfiles", "list the files in a directory", ""},
      {"java.io.inputstream.close", "close an input stream", ""},
      {"java.nio.file.files.readallbytes", "read all bytes of a file", ""},
      {"java.nio.file.files.copy", "copy a file to another location", ""},
      {"java.nio.file.paths.get", "build a path from a string", ""},
      {"java.net.url.openconnection", "open a connection to a url", ""},
      {"java.net.urlencoder.encode", "url encode a query parameter", ""},
      {"java.net.socket.getinputstream", "read data from a socket", ""},
      {"java.text.simpledateformat.format", "format a date as text", ""},
      {"java.text.simpledateformat.parse", "parse a date from a string", ""},
      {"java.util.calendar.gettime", "convert a timestamp to a date", ""},
      {"java.util.calendar.add", "add days to a date", ""},
      {"java.util.random.nextint", "generate a random integer", ""},
      {"java.util.scanner.nextline", "read a line from standard input", ""},
      {"java.util.regex.pattern.compile", "compile a regular expression", ""},
      {"java.util.regex.matcher.find", "find a regex match in text", ""},
      {"java.util.concurrent.executorservice.submit", "submit a task to a thread pool", ""},
      {"java.util.concurrent.executors.newfixedthreadpool", "create a fixed size thread pool", ""},
      {"java.awt.component.setbounds", "set the position and size of a component", ""},
      {"java.awt.color.getrgb", "get the rgb value of a color", ""},
      {"javax.swing.jframe.setvisible", "show a window", ""},
      {"javax.swing.joptionpane.showmessagedialog", "display a message dialog", ""},
      {"java.security.messagedigest.getinstance", "compute an md5 hash", ""},
      {"java.util.uuid.randomuuid", "generate a unique identifier", ""},
      {"java.util.optional.ofnullable", "wrap a value that may be null", ""},
      {"java.util.stream.collectors.tolist", "collect a stream into a list", ""},
      {"java.util.stream.stream.filter", "filter elements of a stream", ""},
  };
  return entries;
}

inline const std::vector<std::string>& query_templates() {
  static const std::vector<std::string> t = {
      "how to {}", "how do i {} in java", "{}", "best way to {}", "java {} example", "{} quickly",
  };
  return t;
}

inline std::string fill_template(const std::string& tmpl, const std::string& task) {
  const auto pos = tmpl.find("{}");
  return tmpl.substr(0, pos) + task + tmpl.substr(pos + 2);
}

// `per_api` paraphrased queries for each inventory entry, shuffled.
inline std::vector<QueryApiPair> desk_corpus(std::uint64_t seed = 7, int per_api = 3) {
  Rng rng(derive_seed(seed, "desk-corpus"));
  std::vector<QueryApiPair> out;
  const auto& templates = query_templates();
  for (const auto& e : api_inventory()) {
    std::vector<std::size_t> idx(templates.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    for (int j = 0; j < per_api && j < static_cast<int>(idx.size()); ++j) {
      QueryApiPair p;
      p.query = fill_template(templates[idx[static_cast<std::size_t>(j)]], e.task);
      p.api = e.api;
      if (*e.alternative) p.extra_relevant.push_back(e.alternative);
      out.push_back(std::move(p));
    }
  }
  rng.shuffle(out);
  return out;
}

// 32 distinct pairs, one query per API.
inline std::vector<QueryApiPair> overfit_corpus() {
  std::vector<QueryApiPair> out;
  const auto& inv = api_inventory();
  for (std::size_t i = 0; i < 32; ++i) {
    QueryApiPair p;
    p.query = fill_template("how to {}", inv[i].task);
    p.api = inv[i].api;
    out.push_back(std::move(p));
  }
  return out;
}

// Every query is paired with two APIs that share no leading word, so only
// the prefix in the prompt can tell them apart.
inline std::vector<QueryApiPair> ambiguous_corpus(int queries = 16) {
  static const std::vector<std::string> tasks = {
      "open the settings",  "save the document",  "close the session",  "load the image",
      "send the message",   "start the timer",    "print the report",   "clear the cache",
      "sort the records",   "parse the header",   "merge the branches", "render the page",
      "encode the payload", "verify the token",   "resize the buffer",  "stop the service",
      "reset the counter",  "flush the log",      "scan the network",   "draw the chart",
  };
  static const std::vector<std::pair<std::string, std::string>> roots = {{"android", "java"}, {"javax", "org"}};
  static const std::vector<std::string> mids = {"app", "io", "net", "util", "view", "text", "sql", "ui"};
  if (queries < 1 || queries > static_cast<int>(tasks.size())) throw std::invalid_argument("ambiguous_corpus: bad size");
  std::vector<QueryApiPair> out;
  for (int q = 0; q < queries; ++q) {
    const auto& task = tasks[static_cast<std::size_t>(q)];
    const auto words = text::split(task, ' ');
    const std::string verb = words.front();
    const std::string noun = words.back();
    const auto& [r1, r2] = roots[static_cast<std::size_t>(q) % roots.size()];
    const auto& m1 = mids[static_cast<std::size_t>(q) % mids.size()];
    const auto& m2 = mids[static_cast<std::size_t>(q + 3) % mids.size()];
    out.push_back({task, r1 + "." + m1 + "." + noun + "manager." + verb, {}, 0});
    out.push_back({task, r2 + "." + m2 + "." + noun + "helper." + verb + noun, {}, 0});
  }
  return out;
}

// One JSON object per line in the corpus file format.
inline void write_jsonl(std::ostream& os, const std::vector<QueryApiPair>& pairs) {
  for (const auto& p : pairs) {
    nlohmann::json j = {{"query", p.query}, {"api", p.api}};
    if (!p.extra_relevant.empty()) j["relevant"] = p.extra_relevant;
    os << j.dump() << '\n';
  }
}

}  // namespace apicomplete::synthetic
