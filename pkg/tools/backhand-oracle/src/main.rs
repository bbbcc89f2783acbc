//! Independent SquashFS cross-check built on the backhand crate.
//!
//!   backhand-oracle extract <image> <outdir>
//!   backhand-oracle build <srcdir> <image> [block_size] [gzip|zstd]
//!
//! backhand's default "parallel" feature returns empty data for files held
//! only in a fragment, so the crate is built without default features.

use backhand::compression::Compressor;
use backhand::{FilesystemCompressor, FilesystemReader, FilesystemWriter, InnerNode, NodeHeader};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

fn extract(img: &str, out: &Path) {
    let file = BufReader::new(File::open(img).unwrap());
    let fs = FilesystemReader::from_reader(file).unwrap();
    for node in fs.files() {
        let rel = node.fullpath.strip_prefix("/").unwrap();
        let dst = out.join(rel);
        match &node.inner {
            InnerNode::File(f) => {
                let mut buf = Vec::new();
                let h = fs.file(f);
                h.reader_checked().unwrap().read_to_end(&mut buf).unwrap();
                std::fs::write(&dst, &buf).unwrap();
            }
            InnerNode::Symlink(s) => std::os::unix::fs::symlink(&s.link, &dst).unwrap(),
            InnerNode::Dir(_) => std::fs::create_dir_all(&dst).unwrap(),
            _ => println!("special {}", node.fullpath.display()),
        }
    }
    println!("ok {}", fs.files().count());
}

fn walk(w: &mut FilesystemWriter, src: &Path, rel: &Path) {
    let mut entries: Vec<_> = std::fs::read_dir(src.join(rel)).unwrap().map(|e| e.unwrap()).collect();
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let r = rel.join(e.file_name());
        let ft = e.file_type().unwrap();
        let hdr = NodeHeader::new(0o755, 0, 0, 0);
        let p = Path::new("/").join(&r);
        if ft.is_dir() {
            w.push_dir(&p, hdr).unwrap();
            walk(w, src, &r);
        } else if ft.is_symlink() {
            w.push_symlink(std::fs::read_link(src.join(&r)).unwrap(), &p, hdr).unwrap();
        } else {
            w.push_file_from_path(src.join(&r), &p, hdr).unwrap();
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 4 {
        eprintln!("usage: backhand-oracle extract <image> <outdir> | build <srcdir> <image> [block_size] [gzip|zstd]");
        std::process::exit(2);
    }
    if args[1] == "extract" {
        extract(&args[2], Path::new(&args[3]));
    } else {
        let mut w = FilesystemWriter::default();
        if args.len() > 4 { w.set_block_size(args[4].parse().unwrap()); }
        w.set_time(0);
        let comp = if args.len() > 5 && args[5] == "zstd" { Compressor::Zstd } else { Compressor::Gzip };
        w.set_compressor(FilesystemCompressor::new(comp, None).unwrap());
        walk(&mut w, Path::new(&args[2]), Path::new(""));
        let out = std::fs::File::create(&args[3]).unwrap();
        w.write(out).unwrap();
    }
}
