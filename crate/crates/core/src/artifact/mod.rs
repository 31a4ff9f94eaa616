pub mod abi;
pub mod ast;
pub mod cache;
pub mod explorer;
pub mod literal;
pub mod manifest;
pub mod solc;
pub mod types;

pub use ast::{AstKind, AstNode, Attr, SrcRange};
pub use cache::Cache;
pub use explorer::{fetch_verified, Chain, ExplorerQuery, FetchedSource};
pub use manifest::{load_entry, load_remote, normalize_corpus, CorpusEntry, Manifest, ManifestEntry};
pub use solc::{compile, compile_auto, discover_compilers, load_source_dir, load_source_file, CompileOptions, Compiler};
pub use types::{ArtifactError, CompilationArtifact, CompilerSettings, SourceMapEntry, SourceUnit};
