//! In-memory duplex byte stream for single-process tests and drivers.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::sync::{Arc, Condvar, Mutex};

#[derive(Default)]
struct PipeState {
    buf: VecDeque<u8>,
    closed: bool,
}

#[derive(Clone, Default)]
struct Pipe {
    state: Arc<(Mutex<PipeState>, Condvar)>,
}

impl Pipe {
    fn write_bytes(&self, data: &[u8]) -> std::io::Result<usize> {
        let (lock, cv) = &*self.state;
        let mut st = lock.lock().unwrap();
        if st.closed {
            return Err(std::io::Error::new(
                std::io::ErrorKind::BrokenPipe,
                "peer closed",
            ));
        }
        st.buf.extend(data);
        cv.notify_all();
        Ok(data.len())
    }

    fn read_bytes(&self, out: &mut [u8]) -> std::io::Result<usize> {
        let (lock, cv) = &*self.state;
        let mut st = lock.lock().unwrap();
        loop {
            if !st.buf.is_empty() {
                let n = out.len().min(st.buf.len());
                for slot in out.iter_mut().take(n) {
                    *slot = st.buf.pop_front().unwrap();
                }
                return Ok(n);
            }
            if st.closed {
                return Ok(0);
            }
            st = cv.wait(st).unwrap();
        }
    }

    fn close(&self) {
        let (lock, cv) = &*self.state;
        lock.lock().unwrap().closed = true;
        cv.notify_all();
    }
}

/// One endpoint of an in-memory duplex connection.
pub struct MemStream {
    incoming: Pipe,
    outgoing: Pipe,
}

impl Read for MemStream {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.incoming.read_bytes(buf)
    }
}

impl Write for MemStream {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.outgoing.write_bytes(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl Drop for MemStream {
    fn drop(&mut self) {
        self.incoming.close();
        self.outgoing.close();
    }
}

/// A connected pair of in-memory streams.
pub fn duplex() -> (MemStream, MemStream) {
    let ab = Pipe::default();
    let ba = Pipe::default();
    (
        MemStream {
            incoming: ba.clone(),
            outgoing: ab.clone(),
        },
        MemStream {
            incoming: ab,
            outgoing: ba,
        },
    )
}
